//! Quasi-static sweeps with hysteresis.
//!
//! A sweep runs in two phases: every grid point is solved independently,
//! then a sequential pass picks the occupied stable root at each point. Under
//! continuation the pick is the stable root nearest (in log occupation) to
//! the previous one; when that branch ends the sweep lands on the surviving
//! stable root and the point is flagged as a jump.

use crate::error::{invalid, Error, Result};
use crate::params::{dbm_to_watts, hz, DriveCondition, SystemParams};
use crate::response::{evaluate_response, OperatingPoint, ShiftEvaluation};
use crate::steady_state::{
    bistable_window, build_cubic, magnon_frequency_shift, solve_steady, BranchLabel, Stability,
    SteadyBranch, SteadyOptions,
};

/// Relative occupation change between neighbours that counts as a jump.
pub const JUMP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Source power in dBm.
    PowerDbm,
    /// Drive frequency in Hz.
    DriveFrequencyHz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Forward,
    Backward,
    /// Forward then backward, the second pass starting where the first ended.
    Loop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchPolicy {
    Continuation,
    Lowest,
    Highest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPlan {
    pub axis: SweepAxis,
    pub start: f64,
    pub stop: f64,
    /// Number of grid points, at least 2.
    pub steps: usize,
    pub direction: SweepDirection,
    pub policy: BranchPolicy,
    pub steady: SteadyOptions,
    pub evaluation: ShiftEvaluation,
}

impl SweepPlan {
    pub fn power(start_dbm: f64, stop_dbm: f64, steps: usize) -> Self {
        Self {
            axis: SweepAxis::PowerDbm,
            start: start_dbm,
            stop: stop_dbm,
            steps,
            direction: SweepDirection::Loop,
            policy: BranchPolicy::Continuation,
            steady: SteadyOptions::default(),
            evaluation: ShiftEvaluation::default(),
        }
    }

    pub fn with_direction(mut self, direction: SweepDirection) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_policy(mut self, policy: BranchPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(invalid("steps", format!("need at least 2 points, got {}", self.steps)));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(invalid("start", "sweep bounds must be finite"));
        }
        if self.start == self.stop {
            return Err(invalid("stop", "must differ from start"));
        }
        Ok(())
    }

    /// Grid from `start` to `stop` inclusive.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.steps - 1;
        (0..=n)
            .map(|i| {
                if i == n {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * i as f64 / n as f64
                }
            })
            .collect()
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start).abs() / (self.steps - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Forward,
    Backward,
}

impl Pass {
    pub fn as_str(self) -> &'static str {
        match self {
            Pass::Forward => "forward",
            Pass::Backward => "backward",
        }
    }
}

/// One point of a sweep at the selected branch. Frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub pass: Pass,
    pub axis_value: f64,
    pub power_dbm: f64,
    /// Source power in watts.
    pub power_w: f64,
    pub omega_d: f64,
    pub occupation: f64,
    /// Full magnon frequency shift.
    pub magnon_shift: f64,
    pub omega_m_dressed: f64,
    /// `|G_mb|`
    pub g_eff: f64,
    pub spring_shift: f64,
    pub cross_kerr_shift: f64,
    pub total_shift: f64,
    pub linewidth_change: f64,
    pub stability: Stability,
    pub label: BranchLabel,
    pub jump: bool,
}

fn drive_at(base: &DriveCondition, axis: SweepAxis, value: f64) -> DriveCondition {
    match axis {
        SweepAxis::PowerDbm => base.with_power(value),
        SweepAxis::DriveFrequencyHz => DriveCondition {
            omega_d: hz(value),
            ..*base
        },
    }
}

fn log_distance(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a.max(f64::MIN_POSITIVE).ln() - b.max(f64::MIN_POSITIVE).ln()).abs()
    }
}

struct SolvedPoint {
    value: f64,
    drive: DriveCondition,
    branches: Vec<SteadyBranch>,
}

fn solve_grid(
    params: &SystemParams,
    base: &DriveCondition,
    plan: &SweepPlan,
    values: &[f64],
) -> Result<Vec<SolvedPoint>> {
    values
        .iter()
        .map(|&value| {
            let drive = drive_at(base, plan.axis, value);
            let branches = solve_steady(params, &drive, plan.steady)?;
            Ok(SolvedPoint {
                value,
                drive,
                branches,
            })
        })
        .collect()
}

fn select_pass(
    params: &SystemParams,
    plan: &SweepPlan,
    points: &[SolvedPoint],
    pass: Pass,
    carried: Option<f64>,
) -> Result<Vec<SweepRecord>> {
    let mut records = Vec::with_capacity(points.len());
    let mut previous = carried;
    for point in points {
        let stable: Vec<&SteadyBranch> = point.branches.iter().filter(|b| b.stable()).collect();
        if stable.is_empty() {
            return Err(Error::NoStableRoot {
                axis_value: point.value,
            });
        }
        let chosen = match (plan.policy, previous) {
            (BranchPolicy::Lowest, _) => stable[0],
            (BranchPolicy::Highest, _) => stable[stable.len() - 1],
            (BranchPolicy::Continuation, None) => match pass {
                Pass::Forward => stable[0],
                Pass::Backward => stable[stable.len() - 1],
            },
            (BranchPolicy::Continuation, Some(x_prev)) => stable
                .iter()
                .copied()
                .min_by(|p, q| {
                    log_distance(p.occupation, x_prev)
                        .partial_cmp(&log_distance(q.occupation, x_prev))
                        .unwrap()
                })
                .expect("non-empty"),
        };
        let jump = match previous {
            Some(x_prev) if x_prev > 0.0 => {
                (chosen.occupation - x_prev).abs() / x_prev > JUMP_THRESHOLD
            }
            _ => false,
        };
        previous = Some(chosen.occupation);
        records.push(record(params, plan, point, chosen, pass, jump)?);
    }
    Ok(records)
}

fn record(
    params: &SystemParams,
    plan: &SweepPlan,
    point: &SolvedPoint,
    branch: &SteadyBranch,
    pass: Pass,
    jump: bool,
) -> Result<SweepRecord> {
    let op = OperatingPoint::new(params, &point.drive, branch);
    let response = evaluate_response(&op, plan.evaluation)?;
    let magnon_shift = magnon_frequency_shift(params, branch);
    Ok(SweepRecord {
        pass,
        axis_value: point.value,
        power_dbm: point.drive.power_dbm,
        power_w: dbm_to_watts(point.drive.power_dbm),
        omega_d: point.drive.omega_d,
        occupation: branch.occupation,
        magnon_shift,
        omega_m_dressed: params.omega_m_bare + magnon_shift,
        g_eff: response.g_eff,
        spring_shift: response.spring_shift,
        cross_kerr_shift: response.cross_kerr_shift,
        total_shift: response.total_shift,
        linewidth_change: response.linewidth_change,
        stability: branch.stability,
        label: branch.label,
        jump,
    })
}

/// Runs `plan` from `base`; the axis overrides the matching field of `base`.
/// A loop returns the forward records followed by the backward ones.
pub fn run_sweep(
    params: &SystemParams,
    base: &DriveCondition,
    plan: &SweepPlan,
) -> Result<Vec<SweepRecord>> {
    plan.validate()?;
    let grid = plan.grid();
    let points = solve_grid(params, base, plan, &grid)?;
    match plan.direction {
        SweepDirection::Forward => select_pass(params, plan, &points, Pass::Forward, None),
        SweepDirection::Backward => {
            let reversed: Vec<SolvedPoint> = points.into_iter().rev().collect();
            select_pass(params, plan, &reversed, Pass::Backward, None)
        }
        SweepDirection::Loop => {
            let mut forward = select_pass(params, plan, &points, Pass::Forward, None)?;
            let carried = forward.last().map(|r| r.occupation);
            let reversed: Vec<SolvedPoint> = points.into_iter().rev().collect();
            let backward = select_pass(params, plan, &reversed, Pass::Backward, carried)?;
            forward.extend(backward);
            Ok(forward)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HysteresisLoop {
    /// Ascending axis order.
    pub forward: Vec<SweepRecord>,
    /// Descending axis order.
    pub backward: Vec<SweepRecord>,
    /// Trapezoid integral of `|x_forward − x_backward|` over the axis.
    pub area: f64,
}

/// Forward and backward continuation sweeps over `[start, stop]` of
/// `plan.axis`, and the enclosed area in occupation × axis units.
pub fn hysteresis_loop(
    params: &SystemParams,
    base: &DriveCondition,
    plan: &SweepPlan,
) -> Result<HysteresisLoop> {
    let plan = SweepPlan {
        direction: SweepDirection::Loop,
        policy: BranchPolicy::Continuation,
        ..*plan
    };
    let mut records = run_sweep(params, base, &plan)?;
    let backward = records.split_off(plan.steps);
    let forward = records;
    let mut area = 0.0;
    let n = forward.len();
    for i in 1..n {
        let gap = |j: usize| (forward[j].occupation - backward[n - 1 - j].occupation).abs();
        let width = (forward[i].axis_value - forward[i - 1].axis_value).abs();
        area += 0.5 * width * (gap(i) + gap(i - 1));
    }
    Ok(HysteresisLoop {
        forward,
        backward,
        area,
    })
}

/// Source powers `(backward edge, forward edge)` in dBm bounding the
/// bistable window at the frequency and attenuation of `drive` (phonon
/// back-action off).
pub fn window_powers(params: &SystemParams, drive: &DriveCondition) -> Result<Option<(f64, f64)>> {
    let reference = drive.with_power(0.0);
    let cubic = build_cubic(params, &reference)?;
    Ok(bistable_window(&cubic).map(|(lo, hi)| {
        let to_dbm = |d: f64| 10.0 * (d / cubic.drive_strength).log10();
        (to_dbm(lo), to_dbm(hi))
    }))
}
