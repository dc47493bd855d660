//! Time-domain mean-field equations of motion, used as an independent check
//! on the steady-state solver.
//!
//! `A` and `M` live in the frame rotating at the drive, `B` in the lab frame.

mod integrator;

pub use integrator::{dopri5, Control, Dopri5Outcome, Dopri5Settings};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::params::{dbm_to_watts, DriveCondition, SystemParams, HBAR};
use crate::steady_state::{solve_steady, SteadyBranch, SteadyOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub a: Complex64,
    pub m: Complex64,
    pub b: Complex64,
}

impl State {
    pub fn from_branch(branch: &SteadyBranch) -> Self {
        Self {
            a: branch.a_amp,
            m: branch.m_amp,
            b: branch.b_amp,
        }
    }

    fn to_array(self) -> [f64; 6] {
        [self.a.re, self.a.im, self.m.re, self.m.im, self.b.re, self.b.im]
    }

    fn from_array(y: &[f64; 6]) -> Self {
        Self {
            a: Complex64::new(y[0], y[1]),
            m: Complex64::new(y[2], y[3]),
            b: Complex64::new(y[4], y[5]),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.a.norm_sqr() + self.m.norm_sqr() + self.b.norm_sqr()).sqrt()
    }
}

/// Right-hand side with everything but the drive amplitude frozen.
#[derive(Debug, Clone, Copy)]
struct Model {
    p: SystemParams,
    delta_a: f64,
    delta_m: f64,
    sqrt_k1: f64,
    backaction: bool,
}

impl Model {
    fn new(params: &SystemParams, drive: &DriveCondition, options: SteadyOptions) -> Self {
        let det = params.detunings(drive);
        Self {
            p: *params,
            delta_a: det.delta_a,
            delta_m: det.delta_m,
            sqrt_k1: params.kappa_1.sqrt(),
            backaction: options.phonon_backaction,
        }
    }

    fn rhs(&self, s: &State, eps: f64) -> State {
        let p = &self.p;
        let (a, m, b) = (s.a, s.m, s.b);
        let n_m = m.norm_sqr();
        // ω_a a†a + g_ma (a†m + m†a) + port-1 drive, in the drive frame.
        let da = -(I * self.delta_a + 0.5 * p.kappa_a) * a - I * p.g_ma * m + self.sqrt_k1 * eps;
        // ω_m m†m + g_ma (a†m + m†a) + K_m (m†m)², in the drive frame.
        let mut dm = -(I * self.delta_m + 0.5 * p.kappa_m) * m
            - I * p.g_ma * a
            - 2.0 * I * p.k_m * n_m * m;
        if self.backaction {
            // g_mb m†m (b + b†) and K_cross m†m b†b acting on the magnon.
            dm -= I * p.g_mb * m * (2.0 * b.re) + I * p.k_cross * b.norm_sqr() * m;
        }
        // ω_b b†b + g_mb m†m (b + b†) + K_cross m†m b†b, lab frame.
        let db = -(I * p.omega_b + 0.5 * p.kappa_b) * b
            - I * p.g_mb * n_m
            - I * p.k_cross * n_m * b;
        State {
            a: da,
            m: dm,
            b: db,
        }
    }
}

/// `d(A, M, B)/dt` at `state` under a constant drive.
pub fn derivatives(
    params: &SystemParams,
    drive: &DriveCondition,
    state: &State,
    options: SteadyOptions,
) -> Result<State> {
    let eps = drive.amplitude()?;
    Ok(Model::new(params, drive, options).rhs(state, eps))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateSettings {
    pub solver: Dopri5Settings,
    /// Keep every n-th accepted step in the returned trajectory.
    pub record_every: usize,
    /// Stop as soon as a steady state is detected.
    pub stop_at_steady: bool,
    /// Threshold on `‖f‖ / (‖y‖ ω_ref)` for steady-state detection.
    pub steady_tol: f64,
}

impl Default for IntegrateSettings {
    fn default() -> Self {
        Self {
            solver: Dopri5Settings::default(),
            record_every: 100,
            stop_at_steady: false,
            steady_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub final_time: f64,
    pub final_state: State,
    /// Detection criterion held for at least one mechanical period.
    pub steady: bool,
    pub accepted_steps: usize,
}

fn amplitude_scale(params: &SystemParams, drive: &DriveCondition, options: SteadyOptions) -> f64 {
    solve_steady(params, drive, options)
        .map(|branches| {
            branches
                .iter()
                .map(|b| State::from_branch(b).norm())
                .fold(0.0, f64::max)
        })
        .unwrap_or(0.0)
}

fn rate_scale(p: &SystemParams, model: &Model) -> f64 {
    [
        p.kappa_a,
        p.kappa_m,
        p.g_ma,
        p.omega_b,
        model.delta_a.abs(),
        model.delta_m.abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn run(
    params: &SystemParams,
    drive: &DriveCondition,
    options: SteadyOptions,
    initial: State,
    horizon: f64,
    settings: &IntegrateSettings,
    eps_at: &dyn Fn(f64) -> f64,
    amp_scale: f64,
) -> Result<Trajectory> {
    if !(horizon > 0.0) {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    let model = Model::new(params, drive, options);
    let scale = amp_scale.max(initial.norm()).max(1.0);
    let bound = 1e3 * scale;
    let mut solver = settings.solver;
    solver.atol = solver.atol.max(solver.rtol * 1e-3 * scale);
    let omega_ref = rate_scale(params, &model);
    solver.h_max = solver.h_max.min(0.5 / omega_ref);
    let period = std::f64::consts::TAU / params.omega_b;

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut quiet_since: Option<f64> = None;
    let mut steady = false;
    let mut count = 0usize;

    let outcome = dopri5(
        |t, y: &[f64; 6]| model.rhs(&State::from_array(y), eps_at(t)).to_array(),
        0.0,
        initial.to_array(),
        horizon,
        &solver,
        |t, y, dy| {
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > bound {
                return Err(Error::Divergence { t, norm, bound });
            }
            if count % settings.record_every.max(1) == 0 {
                times.push(t);
                states.push(State::from_array(y));
            }
            count += 1;
            let rate = dy.iter().map(|v| v * v).sum::<f64>().sqrt();
            let quiet = rate <= settings.steady_tol * omega_ref * norm.max(f64::MIN_POSITIVE)
                || (norm == 0.0 && rate == 0.0);
            match (quiet, quiet_since) {
                (true, None) => quiet_since = Some(t),
                (false, _) => quiet_since = None,
                _ => {}
            }
            steady = quiet_since.is_some_and(|t0| t - t0 >= period);
            Ok(if steady && settings.stop_at_steady {
                Control::Stop
            } else {
                Control::Continue
            })
        },
    )?;
    let final_state = State::from_array(&outcome.y);
    if times.last() != Some(&outcome.t) {
        times.push(outcome.t);
        states.push(final_state);
    }
    Ok(Trajectory {
        times,
        states,
        final_time: outcome.t,
        final_state,
        steady,
        accepted_steps: outcome.accepted,
    })
}

/// Integrates from `initial` for `horizon` seconds at constant drive.
pub fn integrate(
    params: &SystemParams,
    drive: &DriveCondition,
    options: SteadyOptions,
    initial: State,
    horizon: f64,
    settings: &IntegrateSettings,
) -> Result<Trajectory> {
    params.validate()?;
    let eps = drive.amplitude()?;
    let scale = amplitude_scale(params, drive, options);
    run(params, drive, options, initial, horizon, settings, &|_| eps, scale)
}

/// Integrates with the source power following `power_dbm(t)`; attenuation
/// and drive frequency are taken from `drive`.
pub fn integrate_ramp(
    params: &SystemParams,
    drive: &DriveCondition,
    options: SteadyOptions,
    initial: State,
    horizon: f64,
    settings: &IntegrateSettings,
    power_dbm: &dyn Fn(f64) -> f64,
    max_power_dbm: f64,
) -> Result<Trajectory> {
    params.validate()?;
    drive.amplitude()?;
    let omega_d = drive.omega_d;
    let att = drive.attenuation_db;
    let eps_at = |t: f64| (dbm_to_watts(power_dbm(t) - att) / (HBAR * omega_d)).sqrt();
    let scale = amplitude_scale(params, &drive.with_power(max_power_dbm), options);
    run(params, drive, options, initial, horizon, settings, &eps_at, scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifySettings {
    /// Longest integration time, s.
    pub horizon: f64,
    /// How long the trajectory must stay within `return_tol` to count as
    /// returned, s.
    pub dwell: f64,
    /// Relative perturbation size.
    pub perturbation: f64,
    pub return_tol: f64,
    pub escape_tol: f64,
    pub rtol: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            horizon: 2e-4,
            dwell: 2e-6,
            perturbation: 1e-3,
            return_tol: 1e-4,
            escape_tol: 0.1,
            rtol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyReport {
    pub verdict: Verdict,
    /// Relative `(A, M)` distance from the branch at the end of the run.
    pub final_distance: f64,
    pub max_distance: f64,
    pub elapsed: f64,
}

/// Perturbs `branch` by a relative `settings.perturbation` with random phase
/// per component and integrates until the trajectory either stays within
/// `return_tol` for `dwell` (stable) or leaves by more than `escape_tol`
/// (unstable). Phonon back-action follows `branch.phonon_backaction`.
pub fn verify_branch<R: Rng>(
    params: &SystemParams,
    drive: &DriveCondition,
    branch: &SteadyBranch,
    settings: &VerifySettings,
    rng: &mut R,
) -> Result<VerifyReport> {
    params.validate()?;
    let eps = drive.amplitude()?;
    let options = SteadyOptions {
        phonon_backaction: branch.phonon_backaction,
    };
    let target = State::from_branch(branch);
    let mut kick = |z: Complex64| {
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        z * (1.0 + settings.perturbation * Complex64::from_polar(1.0, phase))
    };
    let initial = State {
        a: kick(target.a),
        m: kick(target.m),
        b: kick(target.b),
    };
    let reference = (target.a.norm_sqr() + target.m.norm_sqr()).sqrt();
    if reference == 0.0 {
        return Ok(VerifyReport {
            verdict: Verdict::Stable,
            final_distance: 0.0,
            max_distance: 0.0,
            elapsed: 0.0,
        });
    }
    let distance = |y: &[f64; 6]| {
        let s = State::from_array(y);
        ((s.a - target.a).norm_sqr() + (s.m - target.m).norm_sqr()).sqrt() / reference
    };

    let model = Model::new(params, drive, options);
    let scale = amplitude_scale(params, drive, options).max(initial.norm());
    let solver = Dopri5Settings {
        rtol: settings.rtol,
        atol: settings.rtol * 1e-3 * scale,
        h_max: 0.5 / rate_scale(params, &model),
        ..Default::default()
    };
    let bound = 1e3 * scale;

    let mut verdict = Verdict::Inconclusive;
    let mut inside_since: Option<f64> = None;
    let mut max_distance: f64 = 0.0;
    let mut last_distance = f64::NAN;
    let outcome = dopri5(
        |_, y: &[f64; 6]| model.rhs(&State::from_array(y), eps).to_array(),
        0.0,
        initial.to_array(),
        settings.horizon,
        &solver,
        |t, y, _| {
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > bound {
                return Err(Error::Divergence { t, norm, bound });
            }
            let d = distance(y);
            last_distance = d;
            max_distance = max_distance.max(d);
            if d > settings.escape_tol {
                verdict = Verdict::Unstable;
                return Ok(Control::Stop);
            }
            if d < settings.return_tol {
                let since = *inside_since.get_or_insert(t);
                if t - since >= settings.dwell {
                    verdict = Verdict::Stable;
                    return Ok(Control::Stop);
                }
            } else {
                inside_since = None;
            }
            Ok(Control::Continue)
        },
    )?;
    Ok(VerifyReport {
        verdict,
        final_distance: last_distance,
        max_distance,
        elapsed: outcome.t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{default_params, hz};
    use crate::steady_state::build_cubic;
    use approx::assert_relative_eq;

    fn red() -> (SystemParams, DriveCondition) {
        let mut p = default_params().with_omega_m_bare(hz(7.645e9 + 13e6));
        p.kappa_b *= 100.0;
        (p, DriveCondition::new(hz(7.645e9), 27.5))
    }

    #[test]
    fn vacuum_is_fixed_point() {
        let (p, d) = red();
        let d = d.with_power(f64::NEG_INFINITY);
        let f = derivatives(&p, &d, &State::default(), SteadyOptions::default()).unwrap();
        assert_eq!(f, State::default());
    }

    #[test]
    fn steady_branches_are_fixed_points() {
        let (p, d) = red();
        for backaction in [false, true] {
            let options = SteadyOptions {
                phonon_backaction: backaction,
            };
            for b in solve_steady(&p, &d, options).unwrap() {
                let s = State::from_branch(&b);
                let f = derivatives(&p, &d, &s, options).unwrap();
                let m_rate = p.kappa_m * b.m_amp.norm();
                assert!(f.m.norm() <= 1e-8 * m_rate, "{backaction} {:e}", f.m.norm() / m_rate);
                assert!(f.a.norm() <= 1e-8 * p.kappa_a * b.a_amp.norm());
                assert!(f.b.norm() <= 1e-8 * p.omega_b * b.b_amp.norm());
            }
        }
    }

    #[test]
    fn linear_case_relaxes_to_closed_form() {
        let (mut p, d) = red();
        p.k_m = 0.0;
        p.k_cross = 0.0;
        p.g_mb = 0.0;
        let d = d.with_power(10.0);
        let traj = integrate(
            &p,
            &d,
            SteadyOptions::default(),
            State::default(),
            2e-5,
            &IntegrateSettings::default(),
        )
        .unwrap();
        let c = build_cubic(&p, &d).unwrap();
        let expected = c.drive_strength / (c.delta0 * c.delta0 + c.gamma0 * c.gamma0);
        assert_relative_eq!(traj.final_state.m.norm_sqr(), expected, max_relative = 1e-6);
        assert!(traj.steady);
    }

    #[test]
    fn undriven_energy_decays() {
        let (p, d) = red();
        let d = d.with_power(f64::NEG_INFINITY);
        let start = State {
            a: Complex64::new(1e6, 2e5),
            m: Complex64::new(-3e7, 1e7),
            b: Complex64::new(1e4, 0.0),
        };
        let settings = IntegrateSettings {
            record_every: 1,
            ..Default::default()
        };
        let traj = integrate(&p, &d, SteadyOptions::default(), start, 2e-6, &settings).unwrap();
        let energy: Vec<f64> =
            traj.states.iter().map(|s| s.a.norm_sqr() + s.m.norm_sqr()).collect();
        for w in energy.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert!(energy.last().unwrap() < &(0.5 * energy[0]));
    }

    #[test]
    fn verdicts_match_slope_criterion() {
        use rand::SeedableRng;
        let (p, d) = red();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let options = SteadyOptions {
            phonon_backaction: true,
        };
        let branches = solve_steady(&p, &d, options).unwrap();
        assert_eq!(branches.len(), 3);
        for b in &branches {
            let r = verify_branch(&p, &d, b, &VerifySettings::default(), &mut rng).unwrap();
            let expected = if b.stable() {
                Verdict::Stable
            } else {
                Verdict::Unstable
            };
            assert_eq!(r.verdict, expected, "{:?} {r:?}", b.label);
        }
    }
}
