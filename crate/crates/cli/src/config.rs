//! Run configuration: a TOML file with laboratory units in the key names.

use std::path::{Path, PathBuf};

use kerr_cmm::params::{hz, DriveCondition, SystemParams};
use kerr_cmm::response::ShiftEvaluation;
use kerr_cmm::steady_state::{BranchHint, SteadyOptions};
use kerr_cmm::sweep::{SweepAxis, SweepPlan};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config value `{key}`: {reason}")]
    Value { key: String, reason: String },
}

fn value_err(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modes {
    pub nu_a_hz: f64,
    pub kappa_a_hz: f64,
    pub kappa_1_hz: f64,
    pub kappa_2_hz: f64,
    pub nu_m_bare_hz: f64,
    pub kappa_m_hz: f64,
    pub nu_b_hz: f64,
    pub kappa_b_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Couplings {
    pub g_ma_hz: f64,
    pub g_mb_hz: f64,
    pub k_m_hz: f64,
    pub k_cross_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Drive {
    pub nu_d_hz: f64,
    pub power_dbm: f64,
    #[serde(default)]
    pub attenuation_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Lower,
    Upper,
}

impl From<Branch> for BranchHint {
    fn from(b: Branch) -> Self {
        match b {
            Branch::Lower => BranchHint::Lower,
            Branch::Upper => BranchHint::Upper,
        }
    }
}

/// Power sweep (`start_dbm`, `stop_dbm`) or drive-frequency sweep
/// (`start_hz`, `stop_hz`).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub start_dbm: Option<f64>,
    pub stop_dbm: Option<f64>,
    pub start_hz: Option<f64>,
    pub stop_hz: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    201
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    #[serde(default = "default_probe_start")]
    pub start_hz: f64,
    #[serde(default = "default_probe_stop")]
    pub stop_hz: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// When set, the window is `ω̃_b/2π ± zoom_halfwidth_hz` instead.
    pub zoom_halfwidth_hz: Option<f64>,
    pub branch: Option<Branch>,
}

fn default_probe_start() -> f64 {
    -30e6
}

fn default_probe_stop() -> f64 {
    30e6
}

fn default_points() -> usize {
    2001
}

impl Default for Probe {
    fn default() -> Self {
        Self {
            start_hz: default_probe_start(),
            stop_hz: default_probe_stop(),
            points: default_points(),
            zoom_halfwidth_hz: None,
            branch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub svg: bool,
    /// Also write the verify trajectory from vacuum.
    #[serde(default)]
    pub trajectory: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            svg: false,
            trajectory: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    #[serde(default)]
    pub phonon_backaction: bool,
    #[serde(default)]
    pub self_consistent_pole: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verify {
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    #[serde(default = "default_dwell")]
    pub dwell_s: f64,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default = "default_scale")]
    pub kappa_b_scale: f64,
}

fn default_horizon() -> f64 {
    2e-4
}

fn default_dwell() -> f64 {
    2e-6
}

fn default_perturbation() -> f64 {
    1e-3
}

fn default_scale() -> f64 {
    1.0
}

impl Default for Verify {
    fn default() -> Self {
        Self {
            horizon_s: default_horizon(),
            dwell_s: default_dwell(),
            perturbation: default_perturbation(),
            kappa_b_scale: default_scale(),
        }
    }
}

/// The file as written.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub modes: Modes,
    pub couplings: Couplings,
    pub drive: Drive,
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub probe: Probe,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub model: Model,
    #[serde(default)]
    pub verify: Verify,
}

/// Validated configuration in internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub drive: DriveCondition,
    pub sweep: Option<SweepPlan>,
    pub probe: Probe,
    pub output: Output,
    pub steady: SteadyOptions,
    pub evaluation: ShiftEvaluation,
    pub verify: Verify,
}

impl RunConfig {
    pub fn from_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str(&text, path)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let m = &raw.modes;
        let c = &raw.couplings;
        let params = SystemParams {
            omega_a: hz(m.nu_a_hz),
            kappa_a: hz(m.kappa_a_hz),
            kappa_1: hz(m.kappa_1_hz),
            kappa_2: hz(m.kappa_2_hz),
            omega_m_bare: hz(m.nu_m_bare_hz),
            kappa_m: hz(m.kappa_m_hz),
            omega_b: hz(m.nu_b_hz),
            kappa_b: hz(m.kappa_b_hz),
            g_ma: hz(c.g_ma_hz),
            g_mb: hz(c.g_mb_hz),
            k_m: hz(c.k_m_hz),
            k_cross: hz(c.k_cross_hz),
        };
        params.validate().map_err(|e| value_err(&section_key(&e), e.to_string()))?;
        let drive = DriveCondition::new(hz(raw.drive.nu_d_hz), raw.drive.power_dbm)
            .with_attenuation(raw.drive.attenuation_db);
        drive
            .amplitude()
            .map_err(|e| value_err("drive", e.to_string()))?;

        let steady = SteadyOptions {
            phonon_backaction: raw.model.phonon_backaction,
        };
        let evaluation = if raw.model.self_consistent_pole {
            ShiftEvaluation::SelfConsistent
        } else {
            ShiftEvaluation::AtDressedFrequency
        };
        let sweep = raw
            .sweep
            .as_ref()
            .map(|s| sweep_plan(s, steady, evaluation))
            .transpose()?;

        let probe = raw.probe;
        if probe.points < 2 {
            return Err(value_err("probe.points", "need at least 2"));
        }
        match probe.zoom_halfwidth_hz {
            Some(w) if !(w > 0.0) => {
                return Err(value_err("probe.zoom_halfwidth_hz", "must be positive"))
            }
            None if !(probe.stop_hz > probe.start_hz) => {
                return Err(value_err("probe.stop_hz", "must exceed probe.start_hz"))
            }
            _ => {}
        }
        let v = &raw.verify;
        for (key, value) in [
            ("verify.horizon_s", v.horizon_s),
            ("verify.dwell_s", v.dwell_s),
            ("verify.perturbation", v.perturbation),
            ("verify.kappa_b_scale", v.kappa_b_scale),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(value_err(key, format!("must be positive, got {value}")));
            }
        }

        Ok(Self {
            params,
            drive,
            sweep,
            probe,
            output: raw.output,
            steady,
            evaluation,
            verify: raw.verify,
        })
    }
}

/// Maps a core parameter name back to its config key.
fn section_key(e: &kerr_cmm::Error) -> String {
    let name = match e {
        kerr_cmm::Error::InvalidParameter { name, .. } => *name,
        _ => return "modes".to_string(),
    };
    let key = match name {
        "omega_a" => "modes.nu_a_hz",
        "kappa_a" => "modes.kappa_a_hz",
        "kappa_1" => "modes.kappa_1_hz",
        "kappa_2" => "modes.kappa_2_hz",
        "omega_m_bare" => "modes.nu_m_bare_hz",
        "kappa_m" => "modes.kappa_m_hz",
        "omega_b" => "modes.nu_b_hz",
        "kappa_b" => "modes.kappa_b_hz",
        "g_ma" => "couplings.g_ma_hz",
        "g_mb" => "couplings.g_mb_hz",
        "k_m" => "couplings.k_m_hz",
        "k_cross" => "couplings.k_cross_hz",
        other => other,
    };
    key.to_string()
}

fn sweep_plan(
    s: &Sweep,
    steady: SteadyOptions,
    evaluation: ShiftEvaluation,
) -> Result<SweepPlan, ConfigError> {
    let (axis, start, stop) = match (s.start_dbm, s.stop_dbm, s.start_hz, s.stop_hz) {
        (Some(a), Some(b), None, None) => (SweepAxis::PowerDbm, a, b),
        (None, None, Some(a), Some(b)) => (SweepAxis::DriveFrequencyHz, a, b),
        _ => {
            return Err(value_err(
                "sweep",
                "give either start_dbm and stop_dbm or start_hz and stop_hz",
            ))
        }
    };
    let plan = SweepPlan {
        axis,
        start,
        stop,
        steps: s.steps,
        steady,
        evaluation,
        ..SweepPlan::power(start, stop, s.steps)
    };
    plan.validate().map_err(|e| value_err("sweep", e.to_string()))?;
    Ok(plan)
}
