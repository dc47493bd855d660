use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kerr_cmm::dynamics::{integrate, verify_branch, IntegrateSettings, State, Verdict, VerifySettings};
use kerr_cmm::params::{hz, to_hz};
use kerr_cmm::response::{evaluate_response, reflection_spectrum, OperatingPoint};
use kerr_cmm::steady_state::{
    calibrate_bare_frequency, magnon_frequency_shift, select_branch, solve_steady, BranchHint,
    Stability,
};
use kerr_cmm::sweep::{hysteresis_loop, SweepRecord};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, RunConfig};
use crate::csv::{Cell, Table};
use crate::svg::{Plot, Series};

/// Seed for verify's perturbation phases when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 0x6b65_7272;

/// What a subcommand wrote and whether verification found a mismatch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
    pub mismatch: bool,
}

/// Options shared by all subcommands after config loading.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub config_path: PathBuf,
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub svg: bool,
    pub seed: u64,
}

/// Writes `contents` to `dir/name` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn cmd_steady(inv: &Invocation) -> Result<Outcome> {
    let c = &inv.config;
    let branches = solve_steady(&c.params, &c.drive, c.steady)?;
    let mut table = Table::new(&[
        "branch",
        "label",
        "stability",
        "occupation",
        "nu_m_dressed_hz",
        "delta_nu_m_hz",
        "nu_b_dressed_hz",
        "g_eff_hz",
        "spring_shift_hz",
        "cross_kerr_shift_hz",
        "linewidth_change_hz",
        "re_a",
        "im_a",
        "re_m",
        "im_m",
        "re_b",
        "im_b",
    ]);
    for (i, b) in branches.iter().enumerate() {
        let op = OperatingPoint::new(&c.params, &c.drive, b);
        let r = evaluate_response(&op, c.evaluation)?;
        let shift = magnon_frequency_shift(&c.params, b);
        table.row(vec![
            i.into(),
            b.label.as_str().into(),
            b.stability.as_str().into(),
            b.occupation.into(),
            to_hz(c.params.omega_m_bare + shift).into(),
            to_hz(shift).into(),
            to_hz(op.omega_b_tilde + r.spring_shift).into(),
            to_hz(r.g_eff).into(),
            to_hz(r.spring_shift).into(),
            to_hz(r.cross_kerr_shift).into(),
            to_hz(r.linewidth_change).into(),
            b.a_amp.re.into(),
            b.a_amp.im.into(),
            b.m_amp.re.into(),
            b.m_amp.im.into(),
            b.b_amp.re.into(),
            b.b_amp.im.into(),
        ]);
    }
    let path = write_atomic(&inv.out_dir, "steady.csv", &table.render())?;
    let labels: Vec<String> = branches
        .iter()
        .map(|b| format!("{} ({})", b.label.as_str(), b.stability.as_str()))
        .collect();
    Ok(Outcome {
        files: vec![path],
        summary: format!("{} root(s): {}", branches.len(), labels.join(", ")),
        mismatch: false,
    })
}

fn sweep_row(table: &mut Table, r: &SweepRecord) {
    table.row(vec![
        r.pass.as_str().into(),
        r.power_dbm.into(),
        r.power_w.into(),
        r.occupation.into(),
        to_hz(r.magnon_shift).into(),
        to_hz(r.g_eff).into(),
        to_hz(r.spring_shift).into(),
        to_hz(r.cross_kerr_shift).into(),
        to_hz(r.total_shift).into(),
        to_hz(r.linewidth_change).into(),
        Cell::Bool(r.stability.is_stable()),
        r.jump.into(),
    ]);
}

pub const SWEEP_COLUMNS: [&str; 12] = [
    "direction",
    "power_dbm",
    "power_w",
    "occupation",
    "delta_nu_m_hz",
    "g_eff_hz",
    "spring_shift_hz",
    "cross_kerr_shift_hz",
    "total_shift_hz",
    "linewidth_change_hz",
    "stable",
    "jump",
];

pub fn cmd_sweep(inv: &Invocation) -> Result<Outcome> {
    let c = &inv.config;
    let plan = c.sweep.ok_or_else(|| ConfigError::Value {
        key: "sweep".into(),
        reason: "section required by the sweep command".into(),
    })?;
    let lp = hysteresis_loop(&c.params, &c.drive, &plan)?;
    let mut table = Table::new(&SWEEP_COLUMNS);
    for r in lp.forward.iter().chain(&lp.backward) {
        sweep_row(&mut table, r);
    }
    let mut files = vec![write_atomic(&inv.out_dir, "sweep.csv", &table.render())?];
    if inv.svg {
        let x_label = match plan.axis {
            kerr_cmm::sweep::SweepAxis::PowerDbm => "drive power (dBm)",
            kerr_cmm::sweep::SweepAxis::DriveFrequencyHz => "drive frequency (Hz)",
        };
        let trace = |records: &[SweepRecord], f: fn(&SweepRecord) -> f64| {
            records.iter().map(|r| (r.axis_value, f(r))).collect::<Vec<_>>()
        };
        for (name, title, y_label, f) in [
            (
                "sweep.svg",
                "Mechanical frequency shift",
                "total shift (Hz)",
                (|r: &SweepRecord| to_hz(r.total_shift)) as fn(&SweepRecord) -> f64,
            ),
            (
                "sweep_linewidth.svg",
                "Mechanical linewidth change",
                "linewidth change (Hz)",
                |r: &SweepRecord| to_hz(r.linewidth_change),
            ),
        ] {
            let plot = Plot {
                title: title.into(),
                x_label: x_label.into(),
                y_label: y_label.into(),
                series: vec![
                    Series {
                        name: "forward".into(),
                        points: trace(&lp.forward, f),
                    },
                    Series {
                        name: "backward".into(),
                        points: trace(&lp.backward, f),
                    },
                ],
            };
            files.push(write_atomic(&inv.out_dir, name, &plot.render())?);
        }
    }
    let jumps = |rs: &[SweepRecord]| rs.iter().filter(|r| r.jump).count();
    Ok(Outcome {
        files,
        summary: format!(
            "{} points per direction, jumps forward {} backward {}, loop area {:.4e}",
            plan.steps,
            jumps(&lp.forward),
            jumps(&lp.backward),
            lp.area
        ),
        mismatch: false,
    })
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn cmd_spectrum(inv: &Invocation) -> Result<Outcome> {
    let c = &inv.config;
    let branches = solve_steady(&c.params, &c.drive, c.steady)?;
    let hint = c.probe.branch.map(BranchHint::from);
    let branch = select_branch(&branches, hint)
        .context("choosing the probed branch (set probe.branch = \"lower\" or \"upper\")")?;
    let op = OperatingPoint::new(&c.params, &c.drive, &branch);
    let grid_hz = match c.probe.zoom_halfwidth_hz {
        Some(w) => {
            let centre = to_hz(op.omega_b_tilde);
            linspace(centre - w, centre + w, c.probe.points)
        }
        None => linspace(c.probe.start_hz, c.probe.stop_hz, c.probe.points),
    };
    let omegas: Vec<f64> = grid_hz.iter().map(|&f| hz(f)).collect();
    let s = reflection_spectrum(&op, &omegas);
    let mut table = Table::new(&["delta_pd_hz", "re_s", "im_s", "abs_s2"]);
    for (f, s) in grid_hz.iter().zip(&s) {
        table.row(vec![(*f).into(), s.re.into(), s.im.into(), s.norm_sqr().into()]);
    }
    let mut files = vec![write_atomic(&inv.out_dir, "spectrum.csv", &table.render())?];
    if inv.svg {
        let plot = Plot {
            title: format!("Reflection, {} branch", branch.label.as_str()),
            x_label: "probe detuning from drive (Hz)".into(),
            y_label: "|S|^2".into(),
            series: vec![Series {
                name: "|S|^2".into(),
                points: grid_hz.iter().zip(&s).map(|(f, s)| (*f, s.norm_sqr())).collect(),
            }],
        };
        files.push(write_atomic(&inv.out_dir, "spectrum.svg", &plot.render())?);
    }
    Ok(Outcome {
        files,
        summary: format!(
            "{} points on the {} branch, occupation {:.4e}",
            grid_hz.len(),
            branch.label.as_str(),
            branch.occupation
        ),
        mismatch: false,
    })
}

/// Replaces the `nu_m_bare_hz` assignment inside `[modes]`, keeping every
/// other line as written.
pub fn rewrite_bare_frequency(text: &str, value: f64, note: &str) -> Result<String, ConfigError> {
    let mut section = String::new();
    let mut replaced = false;
    let mut out = String::with_capacity(text.len() + 80);
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            section = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
        let is_target = section == "modes"
            && trimmed
                .split_once('=')
                .is_some_and(|(k, _)| k.trim() == "nu_m_bare_hz");
        if is_target && !replaced {
            out.push_str(&format!("# {note}\nnu_m_bare_hz = {value:?}\n"));
            replaced = true;
        } else {
            out.push_str(line);
            out.push('\n');
        }
    }
    if !replaced {
        return Err(ConfigError::Value {
            key: "modes.nu_m_bare_hz".into(),
            reason: "not found in the config text".into(),
        });
    }
    Ok(out)
}

pub fn cmd_calibrate(
    inv: &Invocation,
    observed_nu_m_hz: f64,
    at_power_dbm: f64,
    hint: Option<BranchHint>,
) -> Result<Outcome> {
    let c = &inv.config;
    let drive = c.drive.with_power(at_power_dbm);
    let bare = calibrate_bare_frequency(&c.params, &drive, hz(observed_nu_m_hz), hint, c.steady)?;
    let params = c.params.with_omega_m_bare(bare);
    let branches = solve_steady(&params, &drive, c.steady)?;
    let branch = select_branch(&branches, hint)?;
    let predicted = to_hz(bare + magnon_frequency_shift(&params, &branch));

    let text = std::fs::read_to_string(&inv.config_path).map_err(|source| ConfigError::Read {
        path: inv.config_path.clone(),
        source,
    })?;
    let note = format!(
        "calibrated from a dressed magnon at {observed_nu_m_hz:?} Hz observed at {at_power_dbm:?} dBm ({} branch); was {:?}",
        branch.label.as_str(),
        to_hz(c.params.omega_m_bare)
    );
    let updated = rewrite_bare_frequency(&text, to_hz(bare), &note)?;
    let mut table = Table::new(&[
        "observed_nu_m_hz",
        "power_dbm",
        "branch",
        "nu_m_bare_hz",
        "repredicted_nu_m_hz",
        "residual_hz",
    ]);
    table.row(vec![
        observed_nu_m_hz.into(),
        at_power_dbm.into(),
        branch.label.as_str().into(),
        to_hz(bare).into(),
        predicted.into(),
        (predicted - observed_nu_m_hz).into(),
    ]);
    let files = vec![
        write_atomic(&inv.out_dir, "calibrated.cfg", &updated)?,
        write_atomic(&inv.out_dir, "calibrate.csv", &table.render())?,
    ];
    Ok(Outcome {
        files,
        summary: format!(
            "nu_m_bare_hz = {:?} (re-prediction residual {:.3e} Hz)",
            to_hz(bare),
            predicted - observed_nu_m_hz
        ),
        mismatch: false,
    })
}

fn expected_verdict(s: Stability) -> Option<Verdict> {
    match s {
        Stability::Stable => Some(Verdict::Stable),
        Stability::Unstable => Some(Verdict::Unstable),
        Stability::Marginal => None,
    }
}

pub fn cmd_verify(inv: &Invocation) -> Result<Outcome> {
    let c = &inv.config;
    let mut params = c.params;
    params.kappa_b *= c.verify.kappa_b_scale;
    let branches = solve_steady(&params, &c.drive, c.steady)?;
    let settings = VerifySettings {
        horizon: c.verify.horizon_s,
        dwell: c.verify.dwell_s,
        perturbation: c.verify.perturbation,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(inv.seed);
    let mut table = Table::new(&[
        "branch",
        "label",
        "occupation",
        "slope_stability",
        "verdict",
        "agree",
        "final_distance",
        "max_distance",
        "elapsed_s",
    ]);
    let mut mismatch = false;
    let mut verdicts = Vec::new();
    for (i, b) in branches.iter().enumerate() {
        let report = verify_branch(&params, &c.drive, b, &settings, &mut rng)?;
        let agree = expected_verdict(b.stability) == Some(report.verdict);
        mismatch |= !agree;
        verdicts.push(report.verdict.as_str());
        table.row(vec![
            i.into(),
            b.label.as_str().into(),
            b.occupation.into(),
            b.stability.as_str().into(),
            report.verdict.as_str().into(),
            agree.into(),
            report.final_distance.into(),
            report.max_distance.into(),
            report.elapsed.into(),
        ]);
    }
    let mut files = vec![write_atomic(&inv.out_dir, "verify.csv", &table.render())?];
    if c.output.trajectory {
        let traj = integrate(
            &params,
            &c.drive,
            c.steady,
            State::default(),
            c.verify.horizon_s,
            &IntegrateSettings {
                record_every: 10,
                ..Default::default()
            },
        )?;
        let mut t = Table::new(&[
            "time_s", "re_a", "im_a", "re_m", "im_m", "re_b", "im_b", "occupation",
        ]);
        for (time, s) in traj.times.iter().zip(&traj.states) {
            t.row(vec![
                (*time).into(),
                s.a.re.into(),
                s.a.im.into(),
                s.m.re.into(),
                s.m.im.into(),
                s.b.re.into(),
                s.b.im.into(),
                s.m.norm_sqr().into(),
            ]);
        }
        files.push(write_atomic(&inv.out_dir, "trajectory.csv", &t.render())?);
    }
    Ok(Outcome {
        files,
        summary: format!(
            "verdicts [{}]{}",
            verdicts.join(", "),
            if mismatch { ": MISMATCH" } else { "" }
        ),
        mismatch,
    })
}
