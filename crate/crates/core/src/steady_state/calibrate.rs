//! Calibration of unstated quantities (bare magnon frequency, drive-line
//! attenuation) against observed dressed magnon frequencies.

use super::{
    build_cubic, log_distance, magnon_frequency_shift, phonon_detuning_shift, solve_steady,
    BranchHint, BranchLabel, Stability, SteadyOptions,
};
use crate::error::{invalid, Error, Result};
use crate::params::{hz, DriveCondition, SystemParams};

/// A dressed magnon frequency seen at one source power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub power_dbm: f64,
    /// Dressed magnon angular frequency, rad/s.
    pub omega_m: f64,
    pub hint: Option<BranchHint>,
}

const FIXED_POINT_ITER: usize = 200;
/// Required re-prediction accuracy: 1 Hz.
const RESIDUAL_TOL_HZ: f64 = 1.0;

/// Occupation implied by seeing the magnon at `observed` under `drive`,
/// independent of the bare frequency.
///
/// The dressed frequency fixes the effective magnon detuning, so `x` follows
/// from `x [(Δ̃ − η g² Δ_a)² + Γ₀²] = D`. Without back-action the cubic's
/// detuning excludes the phonon part of the observed shift, which makes this
/// a fixed point in `x`; the phonon part is tiny so the iteration
/// converges in a few steps at realistic parameters.
fn implied_occupation(
    params: &SystemParams,
    drive: &DriveCondition,
    observed: f64,
    options: SteadyOptions,
) -> Result<f64> {
    let cubic = build_cubic(params, drive)?;
    if cubic.drive_strength == 0.0 {
        return Ok(0.0);
    }
    let det = params.detunings(drive);
    let offset = cubic.eta_a * params.g_ma * params.g_ma * det.delta_a;
    let delta_obs = observed - drive.omega_d;
    let occupation_at = |phonon: f64| {
        let d = delta_obs - phonon - offset;
        cubic.drive_strength / (d * d + cubic.gamma0 * cubic.gamma0)
    };
    if options.phonon_backaction {
        return Ok(occupation_at(0.0));
    }
    // Damped iteration; the damping halves whenever the update grows.
    let mut x = occupation_at(0.0);
    let mut damping = 1.0;
    let mut last_step = f64::INFINITY;
    for _ in 0..FIXED_POINT_ITER {
        let target = occupation_at(phonon_detuning_shift(params, x));
        if log_distance(target, x) <= 1e-14 {
            return Ok(target);
        }
        let step = (target - x).abs();
        if step > last_step {
            damping *= 0.5;
        }
        last_step = step;
        x += damping * (target - x);
    }
    Err(Error::NoConvergence {
        what: "bare-frequency calibration",
        iterations: FIXED_POINT_ITER,
        residual: log_distance(occupation_at(phonon_detuning_shift(params, x)), x),
    })
}

fn bare_from_occupation(params: &SystemParams, observed: f64, x: f64) -> f64 {
    observed - 2.0 * params.k_m * x - phonon_detuning_shift(params, x)
}

/// Bare magnon frequency for which the branch selected by `hint` sits at
/// the dressed frequency `observed` (rad/s) under `drive`.
///
/// Fails with [`Error::AmbiguousBranch`] if the calibrated point lies inside
/// a bistable window and no hint was given, and with
/// [`Error::BranchMismatch`] if the observation can only be explained by a
/// different branch than the one hinted (including the unstable middle one).
pub fn calibrate_bare_frequency(
    params: &SystemParams,
    drive: &DriveCondition,
    observed: f64,
    hint: Option<BranchHint>,
    options: SteadyOptions,
) -> Result<f64> {
    if !observed.is_finite() {
        return Err(invalid("observed_omega_m", "must be finite"));
    }
    let x = implied_occupation(params, drive, observed, options)?;
    let bare = bare_from_occupation(params, observed, x);
    let calibrated = params.with_omega_m_bare(bare);

    let branches = solve_steady(&calibrated, drive, options)?;
    let found = branches
        .iter()
        .min_by(|p, q| {
            log_distance(p.occupation, x)
                .partial_cmp(&log_distance(q.occupation, x))
                .unwrap()
        })
        .copied()
        .expect("cubic always has a root");
    if found.stability == Stability::Unstable {
        return Err(Error::BranchMismatch {
            requested: hint.map_or("stable", BranchHint::as_str),
            found: found.label.as_str(),
        });
    }
    let stable_count = branches.iter().filter(|b| b.stable()).count();
    if stable_count > 1 {
        let Some(hint) = hint else {
            return Err(Error::AmbiguousBranch);
        };
        let matches = matches!(
            (hint, found.label),
            (BranchHint::Lower, BranchLabel::Lower) | (BranchHint::Upper, BranchLabel::Upper)
        );
        if !matches {
            return Err(Error::BranchMismatch {
                requested: hint.as_str(),
                found: found.label.as_str(),
            });
        }
    }

    let predicted = bare + magnon_frequency_shift(&calibrated, &found);
    let residual = (predicted - observed).abs();
    if residual > hz(RESIDUAL_TOL_HZ) {
        return Err(Error::NoConvergence {
            what: "bare-frequency calibration",
            iterations: 1,
            residual,
        });
    }
    Ok(bare)
}

/// Fits `(omega_m_bare, attenuation_db)` so that both observations are
/// reproduced at the drive frequency of `drive`.
///
/// For a trial attenuation each observation implies a bare frequency on its
/// own; the fit is the attenuation where the two agree, bracketed on a
/// 0.5 dB grid over ±60 dB and refined by bisection. Grid points where an
/// observation cannot be inverted are skipped.
pub fn calibrate_two_point(
    params: &SystemParams,
    drive: &DriveCondition,
    first: &Observation,
    second: &Observation,
    options: SteadyOptions,
) -> Result<(f64, f64)> {
    let mismatch = |att: f64| -> Result<f64> {
        let implied = |obs: &Observation| -> Result<f64> {
            let d = drive.with_power(obs.power_dbm).with_attenuation(att);
            let x = implied_occupation(params, &d, obs.omega_m, options)?;
            Ok(bare_from_occupation(params, obs.omega_m, x))
        };
        Ok(implied(first)? - implied(second)?)
    };

    let mut last_err = Error::NoBracket("two-point attenuation");
    let mut prev: Option<(f64, f64)> = None;
    for att in (0..=240).map(|i| -60.0 + 0.5 * i as f64) {
        let Ok(value) = mismatch(att) else {
            prev = None;
            continue;
        };
        if let Some(prev) = prev.filter(|p| p.1.signum() != value.signum()) {
            let (mut lo, mut hi, f_lo) = (prev.0, att, prev.1);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let f_mid = mismatch(mid)?;
                if f_mid.signum() == f_lo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let att_fit = 0.5 * (lo + hi);
            match check_fit(params, drive, first, second, att_fit, options) {
                Ok(bare) => return Ok((bare, att_fit)),
                Err(e) => last_err = e,
            }
        }
        prev = Some((att, value));
    }
    Err(last_err)
}

fn check_fit(
    params: &SystemParams,
    drive: &DriveCondition,
    first: &Observation,
    second: &Observation,
    att: f64,
    options: SteadyOptions,
) -> Result<f64> {
    let d1 = drive.with_power(first.power_dbm).with_attenuation(att);
    let bare = calibrate_bare_frequency(params, &d1, first.omega_m, first.hint, options)?;
    let d2 = drive.with_power(second.power_dbm).with_attenuation(att);
    let bare2 = calibrate_bare_frequency(params, &d2, second.omega_m, second.hint, options)?;
    if (bare - bare2).abs() > hz(RESIDUAL_TOL_HZ) {
        return Err(Error::NoConvergence {
            what: "two-point calibration",
            iterations: 80,
            residual: (bare - bare2).abs(),
        });
    }
    Ok(bare)
}

/// Attenuation that places a stable steady state at occupation `x` for the
/// source power of `drive` (phonon back-action off).
pub fn attenuation_for_occupation(
    params: &SystemParams,
    drive: &DriveCondition,
    occupation: f64,
) -> Result<f64> {
    if !(occupation > 0.0) || !occupation.is_finite() {
        return Err(invalid("occupation", format!("must be positive, got {occupation}")));
    }
    let reference = drive.with_attenuation(0.0);
    let cubic = build_cubic(params, &reference)?;
    if cubic.drive_strength == 0.0 {
        return Err(Error::Degenerate("zero drive cannot reach a finite occupation".into()));
    }
    let needed = cubic.drive_of(occupation);
    let att = 10.0 * (cubic.drive_strength / needed).log10();
    if cubic.slope(occupation) <= 0.0 {
        return Err(Error::BranchMismatch {
            requested: "stable",
            found: BranchLabel::Middle.as_str(),
        });
    }
    Ok(att)
}
