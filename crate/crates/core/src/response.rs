//! Linear response around a steady state: susceptibilities, the effective
//! mechanical susceptibility, magnonic spring and damping, and the probe
//! reflection spectrum.
//!
//! Probe frequencies `ω` are measured from the drive. `χ_a`, `χ_m` use the
//! `1/[i(Δ − ω) + κ/2]` convention; `χ_b` is the two-sided mechanical
//! response with poles at `±ω̃_b − iκ_b/2`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{DriveCondition, SystemParams};
use crate::steady_state::SteadyBranch;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A steady state together with the dressed quantities entering the
/// fluctuation equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub params: SystemParams,
    pub drive: DriveCondition,
    pub branch: SteadyBranch,
    pub delta_a: f64,
    /// `Δ_m + 2 K_m |M|²` (plus phonon terms if the branch was refined with
    /// back-action).
    pub delta_m_tilde: f64,
    /// `ω_b + K_cross |M|²`
    pub omega_b_tilde: f64,
    /// `G_mb = g_mb M`
    pub g_eff: Complex64,
}

impl OperatingPoint {
    pub fn new(params: &SystemParams, drive: &DriveCondition, branch: &SteadyBranch) -> Self {
        Self {
            params: *params,
            drive: *drive,
            branch: *branch,
            delta_a: params.detunings(drive).delta_a,
            delta_m_tilde: branch.delta_m_tilde,
            omega_b_tilde: params.omega_b + params.k_cross * branch.occupation,
            g_eff: params.g_mb * branch.m_amp,
        }
    }

    fn g_eff_sqr(&self) -> f64 {
        self.params.g_mb * self.params.g_mb * self.branch.occupation
    }

    fn chi_a_c(&self, omega: Complex64) -> Complex64 {
        1.0 / (I * (self.delta_a - omega) + 0.5 * self.params.kappa_a)
    }

    fn chi_m_c(&self, omega: Complex64) -> Complex64 {
        1.0 / (I * (self.delta_m_tilde - omega) + 0.5 * self.params.kappa_m)
    }

    fn chi_ma_c(&self, omega: Complex64) -> Complex64 {
        let g2 = self.params.g_ma * self.params.g_ma;
        1.0 / (1.0 / self.chi_m_c(omega) + g2 * self.chi_a_c(omega))
    }

    fn chi_ma_prime(&self, omega: Complex64) -> Complex64 {
        let g2 = self.params.g_ma * self.params.g_ma;
        let chi_a = self.chi_a_c(omega);
        let chi_ma = self.chi_ma_c(omega);
        I * chi_ma * chi_ma * (1.0 - g2 * chi_a * chi_a)
    }

    fn chi_b_inv_c(&self, omega: Complex64) -> Complex64 {
        let wb = self.omega_b_tilde;
        let kb = self.params.kappa_b;
        (wb * wb + 0.25 * kb * kb - omega * omega - I * omega * kb) / wb
    }

    /// `Π(ω) = 2i|G|² [χ_ma(ω) − χ_ma*(−ω)]`, continued analytically off
    /// the real axis.
    fn backaction_c(&self, omega: Complex64) -> Complex64 {
        let mirrored = self.chi_ma_c(-omega.conj()).conj();
        2.0 * I * self.g_eff_sqr() * (self.chi_ma_c(omega) - mirrored)
    }

    fn backaction_prime(&self, omega: Complex64) -> Complex64 {
        let mirrored = self.chi_ma_prime(-omega.conj()).conj();
        2.0 * I * self.g_eff_sqr() * (self.chi_ma_prime(omega) + mirrored)
    }
}

pub fn chi_a(op: &OperatingPoint, omega: f64) -> Complex64 {
    op.chi_a_c(omega.into())
}

pub fn chi_m(op: &OperatingPoint, omega: f64) -> Complex64 {
    op.chi_m_c(omega.into())
}

/// `[χ_m⁻¹ + g_ma² χ_a]⁻¹`
pub fn chi_ma(op: &OperatingPoint, omega: f64) -> Complex64 {
    op.chi_ma_c(omega.into())
}

/// `ω̃_b / (ω̃_b² + κ_b²/4 − ω² − iωκ_b)`
pub fn chi_b(op: &OperatingPoint, omega: f64) -> Complex64 {
    1.0 / op.chi_b_inv_c(omega.into())
}

/// Magnon-induced mechanical self-energy `2i|G_mb|² [χ_ma(ω) − χ_ma*(−ω)]`.
pub fn backaction(op: &OperatingPoint, omega: f64) -> Complex64 {
    op.backaction_c(omega.into())
}

/// `[χ_b⁻¹ − Π]⁻¹`
pub fn chi_b_eff(op: &OperatingPoint, omega: f64) -> Complex64 {
    let w = Complex64::from(omega);
    1.0 / (op.chi_b_inv_c(w) - op.backaction_c(w))
}

/// `−Re Π(ω)`
pub fn spring_shift_at(op: &OperatingPoint, omega: f64) -> f64 {
    -backaction(op, omega).re
}

/// `Im Π(ω)`
pub fn linewidth_change_at(op: &OperatingPoint, omega: f64) -> f64 {
    backaction(op, omega).im
}

/// Spring shift evaluated at `ω̃_b`.
pub fn spring_shift(op: &OperatingPoint) -> f64 {
    spring_shift_at(op, op.omega_b_tilde)
}

/// Linewidth change evaluated at `ω̃_b`.
pub fn linewidth_change(op: &OperatingPoint) -> f64 {
    linewidth_change_at(op, op.omega_b_tilde)
}

/// `K_cross |M|²`
pub fn cross_kerr_shift(op: &OperatingPoint) -> f64 {
    op.params.k_cross * op.branch.occupation
}

/// Where the back-action term is evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ShiftEvaluation {
    /// One shot at `ω̃_b`.
    #[default]
    AtDressedFrequency,
    /// Iterate `ω ← ω̃_b + spring(ω)` to a fixed point.
    SelfConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseResult {
    pub spring_shift: f64,
    pub cross_kerr_shift: f64,
    pub total_shift: f64,
    pub linewidth_change: f64,
    /// Probe frequency at which the back-action was evaluated.
    pub evaluated_at: f64,
    /// `|G_mb|`
    pub g_eff: f64,
}

pub fn evaluate_response(op: &OperatingPoint, mode: ShiftEvaluation) -> Result<ResponseResult> {
    let omega = match mode {
        ShiftEvaluation::AtDressedFrequency => op.omega_b_tilde,
        ShiftEvaluation::SelfConsistent => {
            const MAX_ITER: usize = 100;
            let mut omega = op.omega_b_tilde;
            let mut change = f64::INFINITY;
            let mut converged = false;
            for _ in 0..MAX_ITER {
                let next = op.omega_b_tilde + spring_shift_at(op, omega);
                change = (next - omega).abs();
                omega = next;
                if change <= 1e-13 * op.omega_b_tilde.abs() {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NoConvergence {
                    what: "self-consistent spring shift",
                    iterations: MAX_ITER,
                    residual: change,
                });
            }
            omega
        }
    };
    let spring = spring_shift_at(op, omega);
    let cross = cross_kerr_shift(op);
    Ok(ResponseResult {
        spring_shift: spring,
        cross_kerr_shift: cross,
        total_shift: spring + cross,
        linewidth_change: linewidth_change_at(op, omega),
        evaluated_at: omega,
        g_eff: op.g_eff.norm(),
    })
}

/// Complex pole of `χ_b,eff` nearest `ω̃_b − iκ_b/2`, by Newton iteration on
/// `χ_b⁻¹ − Π`.
pub fn mechanical_pole(op: &OperatingPoint) -> Result<Complex64> {
    const MAX_ITER: usize = 50;
    let kb = op.params.kappa_b;
    let mut omega = Complex64::new(op.omega_b_tilde, -0.5 * kb);
    let mut step_norm = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let h = op.chi_b_inv_c(omega) - op.backaction_c(omega);
        let dh = (-2.0 * omega - I * kb) / op.omega_b_tilde - op.backaction_prime(omega);
        let step = h / dh;
        omega -= step;
        step_norm = step.norm();
        if step_norm <= 1e-14 * omega.norm() {
            return Ok(omega);
        }
    }
    Err(Error::NoConvergence {
        what: "mechanical pole",
        iterations: MAX_ITER,
        residual: step_norm,
    })
}

/// Reflection coefficient at the probe port for each probe detuning
/// `Δ_pd = ω_p − ω_d` (rad/s).
///
/// The cavity sees the magnon dressed by the mechanical self-energy
/// `Σ(ω) = −2i|G|² χ_ma χ_b,eff`, i.e.
/// `S = 1 − κ_2 χ_a [1 − g² χ_a χ_ma (1 + 2i|G|² χ_ma χ_b,eff)]`.
/// Its mechanical pole coincides with that of `χ_b,eff`.
pub fn reflection_spectrum(op: &OperatingPoint, probe: &[f64]) -> Vec<Complex64> {
    let g2 = op.params.g_ma * op.params.g_ma;
    let kappa_2 = op.params.kappa_2;
    let big_g2 = op.g_eff_sqr();
    probe
        .iter()
        .map(|&w| {
            let chi_a = chi_a(op, w);
            let chi_ma = chi_ma(op, w);
            let dressing = 1.0 + 2.0 * I * big_g2 * chi_ma * chi_b_eff(op, w);
            1.0 - kappa_2 * chi_a * (1.0 - g2 * chi_a * chi_ma * dressing)
        })
        .collect()
}
