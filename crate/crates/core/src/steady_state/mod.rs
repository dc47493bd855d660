//! Mean-field steady states: the occupation cubic, its stability, the
//! complex amplitudes of all three modes, and calibration of the bare magnon
//! frequency.

mod calibrate;
mod cubic;

pub use calibrate::{
    attenuation_for_occupation, calibrate_bare_frequency, calibrate_two_point, Observation,
};
pub use cubic::{
    bistable_window, build_cubic, classify_stability, solve_occupation, window_turning_points,
    BranchLabel, ClassifiedRoot, CubicProblem, OccupationRoot, Stability, DEGENERACY_TOL,
    MARGINAL_TOL,
};

pub(crate) use cubic::build_cubic_shifted;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{DriveCondition, SystemParams};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative tolerance of the `|M|² = x` consistency check.
pub const CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SteadyOptions {
    /// Feed the phonon terms `K_cross |B|² + 2 g_mb Re B` back into the
    /// magnon detuning (self-consistent refinement). Off by default.
    pub phonon_backaction: bool,
}

/// Which coexisting stable branch an observation or request refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchHint {
    Lower,
    Upper,
}

impl BranchHint {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchHint::Lower => "lower",
            BranchHint::Upper => "upper",
        }
    }
}

/// One steady state with all amplitudes filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyBranch {
    /// `|M|²`
    pub occupation: f64,
    pub m_amp: Complex64,
    pub a_amp: Complex64,
    /// Static phonon displacement in the lab frame.
    pub b_amp: Complex64,
    pub stability: Stability,
    pub label: BranchLabel,
    /// Magnon detuning used for `M`: `Δ_m + 2 k_m x`, plus the phonon terms
    /// when back-action is on.
    pub delta_m_tilde: f64,
    pub phonon_backaction: bool,
}

impl SteadyBranch {
    pub fn stable(&self) -> bool {
        self.stability.is_stable()
    }
}

/// `B = −i g_mb x / (i ω̃_b + κ_b/2)` with `ω̃_b = ω_b + K_cross x`.
pub fn phonon_amplitude(params: &SystemParams, occupation: f64) -> Complex64 {
    let omega_b_tilde = params.omega_b + params.k_cross * occupation;
    -I * params.g_mb * occupation / (I * omega_b_tilde + 0.5 * params.kappa_b)
}

/// Phonon contribution `K_cross |B|² + 2 g_mb Re B` to the magnon detuning.
pub fn phonon_detuning_shift(params: &SystemParams, occupation: f64) -> f64 {
    let b = phonon_amplitude(params, occupation);
    params.k_cross * b.norm_sqr() + 2.0 * params.g_mb * b.re
}

fn fill(
    params: &SystemParams,
    drive: &DriveCondition,
    root: &ClassifiedRoot,
    extra_delta_m: f64,
    phonon_backaction: bool,
) -> Result<SteadyBranch> {
    let x = root.occupation;
    let eps = drive.amplitude()?;
    let det = params.detunings(drive);
    let delta_m_tilde = det.delta_m + 2.0 * params.k_m * x + extra_delta_m;
    let cav = Complex64::new(0.5 * params.kappa_a, det.delta_a);
    let mag = Complex64::new(0.5 * params.kappa_m, delta_m_tilde);
    let feed = params.kappa_1.sqrt() * eps;
    let m_amp = -I * params.g_ma * feed / (cav * mag + params.g_ma * params.g_ma);
    let a_amp = (feed - I * params.g_ma * m_amp) / cav;
    let b_amp = phonon_amplitude(params, x);

    let computed = m_amp.norm_sqr();
    if (computed - x).abs() > CONSISTENCY_TOL * x.max(f64::MIN_POSITIVE) && x > 0.0 {
        return Err(Error::Inconsistent {
            computed,
            expected: x,
        });
    }
    Ok(SteadyBranch {
        occupation: x,
        m_amp,
        a_amp,
        b_amp,
        stability: root.stability,
        label: root.label,
        delta_m_tilde,
        phonon_backaction,
    })
}

/// Amplitudes at occupation `x`, which must be a root of the cubic (phonon
/// back-action off). Stability and label come from the root set at this drive.
pub fn steady_amplitudes(
    params: &SystemParams,
    drive: &DriveCondition,
    occupation: f64,
) -> Result<SteadyBranch> {
    let cubic = build_cubic(params, drive)?;
    let roots = solve_occupation(&cubic);
    let classified = classify_stability(&cubic, &roots);
    let nearest = classified
        .iter()
        .min_by(|p, q| {
            let dp = (p.occupation - occupation).abs();
            let dq = (q.occupation - occupation).abs();
            dp.partial_cmp(&dq).unwrap()
        })
        .copied()
        .expect("cubic always has a root");
    let mut root = nearest;
    root.occupation = occupation;
    fill(params, drive, &root, 0.0, false)
}

fn log_distance(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a.max(f64::MIN_POSITIVE).ln() - b.max(f64::MIN_POSITIVE).ln()).abs()
    }
}

/// All steady states at `drive`, ascending in occupation.
pub fn solve_steady(
    params: &SystemParams,
    drive: &DriveCondition,
    options: SteadyOptions,
) -> Result<Vec<SteadyBranch>> {
    let cubic = build_cubic(params, drive)?;
    let roots = solve_occupation(&cubic);
    let classified = classify_stability(&cubic, &roots);
    if !options.phonon_backaction {
        return classified
            .iter()
            .map(|root| fill(params, drive, root, 0.0, false))
            .collect();
    }

    let mut out: Vec<SteadyBranch> = Vec::with_capacity(classified.len());
    for seed in &classified {
        let (root, extra) = refine_backaction(params, drive, seed)?;
        if out.iter().any(|b| log_distance(b.occupation, root.occupation) < 1e-9) {
            continue;
        }
        out.push(fill(params, drive, &root, extra, true)?);
    }
    Ok(out)
}

/// Fixed-point loop on `x ↦ root of the cubic with Δ_m shifted by the
/// phonon terms at x`, following the seed root in log space.
fn refine_backaction(
    params: &SystemParams,
    drive: &DriveCondition,
    seed: &ClassifiedRoot,
) -> Result<(ClassifiedRoot, f64)> {
    const MAX_ITER: usize = 100;
    let mut current = *seed;
    let mut change = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let extra = phonon_detuning_shift(params, current.occupation);
        let cubic = build_cubic_shifted(params, drive, extra)?;
        let roots = solve_occupation(&cubic);
        let classified = classify_stability(&cubic, &roots);
        let next = *classified
            .iter()
            .min_by(|p, q| {
                let dp = log_distance(p.occupation, current.occupation);
                let dq = log_distance(q.occupation, current.occupation);
                dp.partial_cmp(&dq).unwrap()
            })
            .expect("cubic always has a root");
        change = log_distance(next.occupation, current.occupation);
        current = next;
        if change <= 1e-14 {
            let extra = phonon_detuning_shift(params, current.occupation);
            return Ok((current, extra));
        }
    }
    Err(Error::NoConvergence {
        what: "phonon back-action refinement",
        iterations: MAX_ITER,
        residual: change,
    })
}

/// Picks the stable branch matching `hint`; with no hint the drive must be
/// outside any bistable window.
pub fn select_branch(branches: &[SteadyBranch], hint: Option<BranchHint>) -> Result<SteadyBranch> {
    let stable: Vec<&SteadyBranch> = branches.iter().filter(|b| b.stable()).collect();
    let pick = match (hint, stable.len()) {
        (_, 0) => {
            // Only marginal roots (tangency): take the one matching the hint.
            return branches
                .iter()
                .find(|b| b.stability != Stability::Unstable)
                .copied()
                .ok_or(Error::NoStableRoot {
                    axis_value: f64::NAN,
                });
        }
        (None, 1) => stable[0],
        (None, _) => return Err(Error::AmbiguousBranch),
        (Some(BranchHint::Lower), _) => stable[0],
        (Some(BranchHint::Upper), _) => stable[stable.len() - 1],
    };
    Ok(*pick)
}

/// Full magnon shift `2 K_m |M|² + K_cross |B|² + 2 g_mb Re B`.
pub fn magnon_frequency_shift(params: &SystemParams, branch: &SteadyBranch) -> f64 {
    self_kerr_shift(params, branch)
        + params.k_cross * branch.b_amp.norm_sqr()
        + 2.0 * params.g_mb * branch.b_amp.re
}

/// Dominant term `2 K_m |M|²`.
pub fn self_kerr_shift(params: &SystemParams, branch: &SteadyBranch) -> f64 {
    2.0 * params.k_m * branch.occupation
}
