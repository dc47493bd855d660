//! The magnon-occupation cubic and its roots.
//!
//! With `x = |M|^2` the steady state obeys
//!
//! ```text
//! D = x [ (delta0 + 2 k_m x)^2 + gamma0^2 ]
//!   = 4 k_m^2 x^3 + 4 k_m delta0 x^2 + (delta0^2 + gamma0^2) x
//! ```
//!
//! where `D = eta_a kappa_1 g_ma^2 eps_d^2` is the drive strength seen by the
//! magnon through the cavity. The coefficients span ~30 decades at realistic
//! parameters, so roots are found in the rescaled variable
//! `y = x |k_m| / gamma0`, where the cubic has O(1) coefficients apart from
//! the constant term.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::params::{DriveCondition, SystemParams};

/// Coefficients of the steady-state cubic at one drive condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicProblem {
    /// Effective detuning `Δ_m − η_a g_ma² Δ_a`, rad/s.
    pub delta0: f64,
    /// Effective half-linewidth `κ_m/2 + η_a g_ma² κ_a/2`, rad/s.
    pub gamma0: f64,
    /// `1 / (Δ_a² + (κ_a/2)²)`, s².
    pub eta_a: f64,
    pub k_m: f64,
    /// `η_a κ_1 g_ma² ε_d²`, s⁻².
    pub drive_strength: f64,
}

impl CubicProblem {
    /// `[c3, c2, c1, c0]` of `c3 x³ + c2 x² + c1 x + c0 = 0`.
    pub fn coefficients(&self) -> [f64; 4] {
        [
            4.0 * self.k_m * self.k_m,
            4.0 * self.k_m * self.delta0,
            self.delta0 * self.delta0 + self.gamma0 * self.gamma0,
            -self.drive_strength,
        ]
    }

    /// Drive strength needed to hold occupation `x`.
    pub fn drive_of(&self, x: f64) -> f64 {
        let detuning = self.delta0 + 2.0 * self.k_m * x;
        x * (detuning * detuning + self.gamma0 * self.gamma0)
    }

    /// Residual `D(x) − D`.
    pub fn eval(&self, x: f64) -> f64 {
        self.drive_of(x) - self.drive_strength
    }

    /// `dD/dx`; positive on stable branches.
    pub fn slope(&self, x: f64) -> f64 {
        let k = self.k_m;
        12.0 * k * k * x * x + 8.0 * k * self.delta0 * x + self.delta0 * self.delta0
            + self.gamma0 * self.gamma0
    }

    /// Largest magnitude among the individual terms of the cubic at `x`;
    /// the natural scale for residuals.
    pub fn term_scale(&self, x: f64) -> f64 {
        let [c3, c2, c1, c0] = self.coefficients();
        (c3 * x * x * x)
            .abs()
            .max((c2 * x * x).abs())
            .max((c1 * x).abs())
            .max(c0.abs())
    }

    fn slope_scale(&self, x: f64) -> f64 {
        let k = self.k_m;
        12.0 * k * k * x * x
            + (8.0 * k * self.delta0 * x).abs()
            + self.delta0 * self.delta0
            + self.gamma0 * self.gamma0
    }

    /// Same cubic with the drive strength replaced.
    pub fn with_drive_strength(mut self, drive_strength: f64) -> Self {
        self.drive_strength = drive_strength;
        self
    }
}

/// Assembles the cubic for `params` under `drive`.
pub fn build_cubic(params: &SystemParams, drive: &DriveCondition) -> Result<CubicProblem> {
    build_cubic_shifted(params, drive, 0.0)
}

/// Like [`build_cubic`] with an extra magnon detuning `extra_delta_m` (used
/// for the phonon back-action refinement).
pub(crate) fn build_cubic_shifted(
    params: &SystemParams,
    drive: &DriveCondition,
    extra_delta_m: f64,
) -> Result<CubicProblem> {
    params.validate()?;
    let eps = drive.amplitude()?;
    let det = params.detunings(drive);
    let denom = det.delta_a * det.delta_a + 0.25 * params.kappa_a * params.kappa_a;
    if !(denom > 0.0) {
        return Err(Error::Degenerate(
            "cavity linewidth and detuning both vanish; eta_a is infinite".into(),
        ));
    }
    let eta_a = 1.0 / denom;
    let g2 = params.g_ma * params.g_ma;
    Ok(CubicProblem {
        delta0: det.delta_m + extra_delta_m - eta_a * g2 * det.delta_a,
        gamma0: 0.5 * params.kappa_m + 0.5 * eta_a * g2 * params.kappa_a,
        eta_a,
        k_m: params.k_m,
        drive_strength: eta_a * params.kappa_1 * g2 * eps * eps,
    })
}

/// A nonnegative real root of the cubic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationRoot {
    pub occupation: f64,
    /// Set when two roots merged within relative 1e-8 (tangency).
    pub degenerate: bool,
}

/// Relative spacing below which two roots are reported as one double root.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// All real roots with `x >= 0`, ascending. One root outside the bistable
/// window, three inside it, two (one flagged degenerate) at its edges.
pub fn solve_occupation(cubic: &CubicProblem) -> Vec<OccupationRoot> {
    let simple = |x| {
        vec![OccupationRoot {
            occupation: x,
            degenerate: false,
        }]
    };
    if cubic.drive_strength <= 0.0 {
        return simple(0.0);
    }
    if cubic.k_m == 0.0 {
        let c1 = cubic.delta0 * cubic.delta0 + cubic.gamma0 * cubic.gamma0;
        return simple(cubic.drive_strength / c1);
    }

    let abs_k = cubic.k_m.abs();
    let gamma0 = cubic.gamma0;
    let to_x = gamma0 / abs_k;

    // Monic cubic in y = x |k| / gamma0:
    //   y^3 + a y^2 + b y + c = 0
    let r = cubic.delta0 / gamma0;
    let a = cubic.k_m.signum() * r;
    let b = 0.25 * (r * r + 1.0);
    let c = -0.25 * cubic.drive_strength * abs_k / (gamma0 * gamma0 * gamma0);

    let mut ys = scaled_real_roots(a, b, c);
    ys.retain(|&y| y > 0.0);
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());

    let mut roots: Vec<OccupationRoot> = Vec::with_capacity(3);
    for y in ys {
        let x = y * to_x;
        match roots.last_mut() {
            Some(prev) if (x - prev.occupation).abs() <= DEGENERACY_TOL * x => {
                prev.occupation = 0.5 * (prev.occupation + x);
                prev.degenerate = true;
            }
            _ => roots.push(OccupationRoot {
                occupation: x,
                degenerate: false,
            }),
        }
    }
    if roots.is_empty() {
        // A positive drive always admits a positive root; fall back to bisection
        // if the eigenvalue route lost it to rounding.
        roots.push(OccupationRoot {
            occupation: bisect_monic(a, b, c) * to_x,
            degenerate: false,
        });
    }
    roots
}

/// Real roots of `y^3 + a y^2 + b y + c` via the eigenvalues of its
/// companion matrix, each polished by guarded Newton steps on the cubic.
fn scaled_real_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    // Second rescaling z = y / rho so every coefficient is at most 1.
    let rho = a.abs().max(b.abs().sqrt()).max(c.abs().cbrt()).max(f64::MIN_POSITIVE);
    let (az, bz, cz) = (a / rho, b / (rho * rho), c / (rho * rho * rho));
    #[rustfmt::skip]
    let companion = Matrix3::new(
        -az, -bz, -cz,
        1.0, 0.0, 0.0,
        0.0, 1.0, 0.0,
    );
    let eigen = companion.complex_eigenvalues();

    let p = |y: f64| ((y + a) * y + b) * y + c;
    let dp = |y: f64| (3.0 * y + 2.0 * a) * y + b;
    let scale = |y: f64| (y * y * y).abs().max((a * y * y).abs()).max((b * y).abs()).max(c.abs());

    let mut out = Vec::with_capacity(3);
    let mut best_imag = (f64::INFINITY, 0.0);
    for (idx, lambda) in eigen.iter().enumerate() {
        if lambda.im.abs() < best_imag.0 {
            best_imag = (lambda.im.abs(), lambda.re * rho);
        }
        if lambda.im.abs() > 1e-7 * lambda.norm().max(1.0) {
            continue;
        }
        let mut y = lambda.re * rho;
        // Newton steps may not reach halfway to another eigenvalue, so a
        // polished root never migrates onto its neighbour.
        let gap = eigen
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != idx)
            .map(|(_, other)| (other * rho - y).norm())
            .fold(f64::INFINITY, f64::min);
        for _ in 0..8 {
            let d = dp(y);
            if d == 0.0 {
                break;
            }
            let step = p(y) / d;
            if !step.is_finite() || step.abs() > 0.5 * gap {
                break;
            }
            let next = y - step;
            if p(next).abs() > p(y).abs() {
                break;
            }
            y = next;
            if step.abs() <= 4.0 * f64::EPSILON * y.abs() {
                break;
            }
        }
        // A complex pair with a tiny imaginary part polishes to no real root.
        if p(y).abs() <= 1e-6 * scale(y) {
            out.push(y);
        }
    }
    if out.is_empty() && best_imag.0.is_finite() {
        out.push(best_imag.1);
    }
    out
}

/// Bisection on the unique sign change of a monic cubic with `c < 0` on
/// `y > 0`; last-resort fallback only.
fn bisect_monic(a: f64, b: f64, c: f64) -> f64 {
    let p = |y: f64| ((y + a) * y + b) * y + c;
    let mut hi = 1.0;
    while p(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stability {
    Stable,
    Unstable,
    /// Tangent root at a bistable-window edge.
    Marginal,
}

impl Stability {
    pub fn is_stable(self) -> bool {
        self == Stability::Stable
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        }
    }
}

/// Label by occupation ordering among the roots at one drive condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchLabel {
    Lower,
    Middle,
    Upper,
}

impl BranchLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchLabel::Lower => "lower",
            BranchLabel::Middle => "middle",
            BranchLabel::Upper => "upper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedRoot {
    pub occupation: f64,
    pub stability: Stability,
    pub label: BranchLabel,
}

/// Relative tolerance on `dD/dx` below which a root counts as marginal.
pub const MARGINAL_TOL: f64 = 1e-8;

/// Slope criterion: a root is stable iff `dD/dx > 0` there.
pub fn classify_stability(cubic: &CubicProblem, roots: &[OccupationRoot]) -> Vec<ClassifiedRoot> {
    let labels: &[BranchLabel] = match roots.len() {
        1 => &[BranchLabel::Lower],
        2 => &[BranchLabel::Lower, BranchLabel::Upper],
        _ => &[BranchLabel::Lower, BranchLabel::Middle, BranchLabel::Upper],
    };
    roots
        .iter()
        .zip(labels)
        .map(|(root, &label)| {
            let x = root.occupation;
            let slope = cubic.slope(x);
            let stability = if root.degenerate || slope.abs() <= MARGINAL_TOL * cubic.slope_scale(x) {
                Stability::Marginal
            } else if slope > 0.0 {
                Stability::Stable
            } else {
                Stability::Unstable
            };
            ClassifiedRoot {
                occupation: x,
                stability,
                label,
            }
        })
        .collect()
}

/// Drive-strength interval `(D_low, D_high)` with three positive roots.
///
/// Requires `k_m * delta0 < 0` and `delta0² >= 3 gamma0²`; at equality the
/// window collapses to a single point. The endpoints are `D(x±)` at the
/// extrema `x± = [−2 delta0 ∓ sqrt(delta0² − 3 gamma0²)] / (6 k_m)`.
/// The `drive_strength` field of `cubic` is ignored.
pub fn bistable_window(cubic: &CubicProblem) -> Option<(f64, f64)> {
    let (k, d0, g0) = (cubic.k_m, cubic.delta0, cubic.gamma0);
    if k == 0.0 || k * d0 >= 0.0 {
        return None;
    }
    let disc = d0 * d0 - 3.0 * g0 * g0;
    if disc < -1e-12 * d0 * d0 {
        return None;
    }
    let root = disc.max(0.0).sqrt();
    let x_minus = (-2.0 * d0 - root) / (6.0 * k);
    let x_plus = (-2.0 * d0 + root) / (6.0 * k);
    let d1 = cubic.drive_of(x_minus);
    let d2 = cubic.drive_of(x_plus);
    Some((d1.min(d2), d1.max(d2)))
}

/// Occupations at the two window edges `(x at D_high, x at D_low)`: the
/// points where the lower and upper stable branches terminate.
pub fn window_turning_points(cubic: &CubicProblem) -> Option<(f64, f64)> {
    let (k, d0, g0) = (cubic.k_m, cubic.delta0, cubic.gamma0);
    bistable_window(cubic)?;
    let root = (d0 * d0 - 3.0 * g0 * g0).max(0.0).sqrt();
    let x1 = (-2.0 * d0 - root) / (6.0 * k);
    let x2 = (-2.0 * d0 + root) / (6.0 * k);
    Some((x1.min(x2), x1.max(x2)))
}
