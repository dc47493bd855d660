//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use kerr_cmm::dynamics::{derivatives, verify_branch, State, Verdict, VerifySettings};
use kerr_cmm::params::{default_params, hz, to_hz, DriveCondition, SystemParams};
use kerr_cmm::presets::{blue_detuned, red_detuned, Scenario};
use kerr_cmm::response::{
    evaluate_response, linewidth_change, mechanical_pole, reflection_spectrum, spring_shift,
    OperatingPoint, ShiftEvaluation,
};
use kerr_cmm::steady_state::{
    attenuation_for_occupation, select_branch, self_kerr_shift, solve_occupation, solve_steady,
    steady_amplitudes, BranchHint, CubicProblem, Stability, SteadyBranch, SteadyOptions,
};
use kerr_cmm::sweep::{hysteresis_loop, run_sweep, window_powers, SweepPlan};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn closest(branches: &[SteadyBranch], x: f64) -> SteadyBranch {
    *branches
        .iter()
        .min_by(|a, b| rel(a.occupation, x).partial_cmp(&rel(b.occupation, x)).unwrap())
        .unwrap()
}

fn a1_parameter_consistency() -> Outcome {
    // Dressed 7.658 -> 7.640 GHz under a 7.645 GHz drive is a self-Kerr shift
    // of -18 MHz on the upper branch.
    let params = default_params().with_omega_m_bare(hz(7.658e9));
    let target = hz(-18e6) / (2.0 * params.k_m);
    let drive = DriveCondition::new(hz(7.645e9), 29.7);
    let drive = match attenuation_for_occupation(&params, &drive, target) {
        Ok(att) => drive.with_attenuation(att),
        Err(e) => return check(false, format!("attenuation fit failed: {e}")),
    };
    let branches = solve_steady(&params, &drive, SteadyOptions::default()).unwrap();
    let upper = select_branch(&branches, Some(BranchHint::Upper)).unwrap();
    let amps = steady_amplitudes(&params, &drive, upper.occupation).unwrap();
    let x = amps.m_amp.norm_sqr();
    let shift = to_hz(self_kerr_shift(&params, &amps));
    let g = to_hz(params.g_mb * amps.m_amp.norm());
    let pass = rel(x, 1.385e15) < 1e-3 && (shift + 18e6).abs() < 1.0 && rel(g, 45.8e3) <= 0.02;
    check(
        pass,
        format!(
            "|M|^2 = {x:.4e}, self-Kerr shift {:.3} MHz, G_mb/2pi = {:.2} kHz vs 45.8 kHz ({:.2}%)",
            shift / 1e6,
            g / 1e3,
            100.0 * rel(g, 45.8e3)
        ),
    )
}

fn a2_cross_kerr_chain() -> Outcome {
    let blue = blue_detuned().unwrap();
    let g_target = hz(42.7e3);
    let x_target = (g_target / blue.params.g_mb).powi(2);
    let drive = match attenuation_for_occupation(&blue.params, &blue.drive, x_target) {
        Ok(att) => blue.drive.with_attenuation(att),
        Err(e) => return check(false, format!("attenuation fit failed: {e}")),
    };
    let branches = solve_steady(&blue.params, &drive, SteadyOptions::default()).unwrap();
    let b = closest(&branches, x_target);
    let op = OperatingPoint::new(&blue.params, &drive, &b);
    let r = evaluate_response(&op, ShiftEvaluation::AtDressedFrequency).unwrap();
    let cross = to_hz(r.cross_kerr_shift);
    let pass = rel(b.occupation, 1.225e15) < 1e-3
        && rel(to_hz(r.g_eff), 42.7e3) < 1e-6
        && rel(cross, -6.5e3) <= 0.03;
    check(
        pass,
        format!(
            "|M|^2 = {:.4e}, cross-Kerr shift {:.3} kHz vs -6.5 kHz ({:.2}%)",
            b.occupation,
            cross / 1e3,
            100.0 * rel(cross, -6.5e3)
        ),
    )
}

/// Roots of `x[(δ0 + 2kx)² + Γ0²] = D` by bisection between the analytic
/// critical points.
fn bracket_roots(k: f64, delta0: f64, gamma0: f64, target: f64) -> Vec<f64> {
    let f = |x: f64| x * ((delta0 + 2.0 * k * x).powi(2) + gamma0 * gamma0) - target;
    let mut breaks = vec![0.0];
    let disc = delta0 * delta0 - 3.0 * gamma0 * gamma0;
    if k != 0.0 && disc > 0.0 {
        let r = disc.sqrt();
        let mut crit: Vec<f64> = [(-2.0 * delta0 - r) / (6.0 * k), (-2.0 * delta0 + r) / (6.0 * k)]
            .into_iter()
            .filter(|&x| x > 0.0)
            .collect();
        crit.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.extend(crit);
    }
    let mut hi = breaks.last().copied().unwrap().max(1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    breaks.push(hi);
    let mut roots = Vec::new();
    for w in breaks.windows(2) {
        let (mut lo, mut up) = (w[0], w[1]);
        let flo = f(lo);
        if flo.signum() == f(up).signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + up);
            if mid <= lo || mid >= up {
                break;
            }
            if f(mid).signum() == flo.signum() {
                lo = mid;
            } else {
                up = mid;
            }
        }
        roots.push(0.5 * (lo + up));
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-8 * a.abs());
    roots
}

fn a3_cubic_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 10_000;
    let mut worst: f64 = 0.0;
    let mut count_errors = 0;
    let mut multi = 0;
    for _ in 0..draws {
        let sign = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let log_u = |rng: &mut ChaCha8Rng, a: f64, b: f64| rng.gen_range(a.ln()..b.ln()).exp();
        let k = sign(&mut rng) * TAU * log_u(&mut rng, 1e-10, 1e-6);
        let delta0 = sign(&mut rng) * TAU * log_u(&mut rng, 1e4, 1e8);
        let gamma0 = TAU * log_u(&mut rng, 1e4, 1e8);
        let x = log_u(&mut rng, 1e6, 1e18);
        let d = x * ((delta0 + 2.0 * k * x).powi(2) + gamma0 * gamma0);
        let cubic = CubicProblem {
            delta0,
            gamma0,
            eta_a: 1.0,
            k_m: k,
            drive_strength: d,
        };
        let roots = solve_occupation(&cubic);
        let oracle = bracket_roots(k, delta0, gamma0, d);
        if roots.len() != oracle.len() {
            count_errors += 1;
            continue;
        }
        multi += (roots.len() > 1) as usize;
        for (r, o) in roots.iter().zip(&oracle) {
            worst = worst.max(rel(r.occupation, *o));
        }
    }
    check(
        count_errors == 0 && worst <= 1e-8,
        format!(
            "{draws} draws ({multi} multi-root), {count_errors} root-count mismatches, worst relative error {worst:.2e}"
        ),
    )
}

fn a4_hysteresis() -> Outcome {
    let red = red_detuned().unwrap();
    let plan = SweepPlan::power(4.7, 29.7, 251);
    let step = plan.step();
    let lp = hysteresis_loop(&red.params, &red.drive, &plan).unwrap();
    let (lo, hi) = window_powers(&red.params, &red.drive).unwrap().unwrap();
    let jumps = |rs: &[kerr_cmm::sweep::SweepRecord]| -> Vec<f64> {
        rs.iter().filter(|r| r.jump).map(|r| r.power_dbm).collect()
    };
    let (f, b) = (jumps(&lp.forward), jumps(&lp.backward));
    let pass = f.len() == 1
        && b.len() == 1
        && f[0] > b[0]
        && (f[0] - hi).abs() <= step
        && (b[0] - lo).abs() <= step;
    check(
        pass,
        format!(
            "jumps forward {f:?} dBm (edge {hi:.3}), backward {b:?} dBm (edge {lo:.3}), step {step:.3} dB"
        ),
    )
}

fn sweep_signs(s: &Scenario, red: bool) -> (bool, usize) {
    let plan = SweepPlan::power(s.power_range.0, s.power_range.1, 201);
    let records = run_sweep(&s.params, &s.drive, &plan).unwrap();
    let ok = records.iter().all(|r| {
        if red {
            r.spring_shift < 0.0 && r.linewidth_change > 0.0
        } else {
            r.spring_shift > 0.0 && r.linewidth_change < 0.0
        }
    });
    (ok, records.len())
}

fn a5_sign_contract() -> Outcome {
    let red = red_detuned().unwrap();
    let blue = blue_detuned().unwrap();
    let (red_ok, n_red) = sweep_signs(&red, true);
    let (blue_ok, n_blue) = sweep_signs(&blue, false);

    // Highest-shift upper-branch point: the last one before the backward jump.
    let lp = hysteresis_loop(&red.params, &red.drive, &SweepPlan::power(4.7, 29.7, 251)).unwrap();
    let j = lp.backward.iter().position(|r| r.jump).unwrap();
    let before = &lp.backward[j - 1];
    let red_spring = to_hz(before.spring_shift);

    let branches = solve_steady(&blue.params, &blue.drive, SteadyOptions::default()).unwrap();
    let b = select_branch(&branches, Some(BranchHint::Upper)).unwrap();
    let op = OperatingPoint::new(&blue.params, &blue.drive, &b);
    let blue_spring = to_hz(spring_shift(&op));

    let pass = red_ok
        && blue_ok
        && rel(red_spring, -200.0) <= 0.5
        && rel(blue_spring, 370.0) <= 0.5;
    check(
        pass,
        format!(
            "red signs {} over {n_red} points, blue signs {} over {n_blue}; red spring {red_spring:.1} Hz at {:.2} dBm vs -200 ({:.0}%), blue spring {blue_spring:.1} Hz at 23.7 dBm vs 370 ({:.0}%)",
            if red_ok { "ok" } else { "violated" },
            if blue_ok { "ok" } else { "violated" },
            before.power_dbm,
            100.0 * rel(red_spring, -200.0),
            100.0 * rel(blue_spring, 370.0)
        ),
    )
}

fn a6_scenarios() -> Vec<(SystemParams, DriveCondition)> {
    let scale = |mut p: SystemParams| {
        p.kappa_b *= 100.0;
        p
    };
    let red = red_detuned().unwrap();
    let blue = blue_detuned().unwrap();
    let plain = (
        default_params().with_omega_m_bare(hz(7.658e9)),
        DriveCondition::new(hz(7.645e9), 0.0),
    );
    let mut configs = Vec::new();
    for (p, d) in [(red.params, red.drive), (blue.params, blue.drive), plain] {
        let p = scale(p);
        let (lo, hi) = window_powers(&p, &d).unwrap().unwrap();
        let (d_lo, d_hi) = (10f64.powf(lo / 10.0), 10f64.powf(hi / 10.0));
        for i in 0..10 {
            let frac = 0.2 + 0.6 * i as f64 / 9.0;
            let power = 10.0 * (d_lo + frac * (d_hi - d_lo)).log10();
            configs.push((p, d.with_power(power)));
        }
        for offset in [-5.0, -2.0, -0.5] {
            configs.push((p, d.with_power(lo + offset)));
        }
        for offset in [0.5, 2.0, 5.0] {
            configs.push((p, d.with_power(hi + offset)));
        }
    }
    let mut linear = scale(red.params);
    linear.k_m = 0.0;
    configs.push((linear, red.drive.with_power(10.0)));
    configs.push((linear, red.drive.with_power(30.0)));
    configs
}

/// Largest real part of the eigenvalues of the finite-difference Jacobian of
/// the mean-field equations at `branch`, in Hz.
fn leading_growth_hz(
    p: &SystemParams,
    d: &DriveCondition,
    branch: &SteadyBranch,
    options: SteadyOptions,
) -> f64 {
    let pack = |s: &State| [s.a.re, s.a.im, s.m.re, s.m.im, s.b.re, s.b.im];
    let unpack = |y: &[f64; 6]| State {
        a: Complex64::new(y[0], y[1]),
        m: Complex64::new(y[2], y[3]),
        b: Complex64::new(y[4], y[5]),
    };
    let y0 = pack(&State::from_branch(branch));
    let mut jac = DMatrix::<f64>::zeros(6, 6);
    for k in 0..6 {
        let h = 1e-7 * y0[k].abs().max(1.0);
        let (mut yp, mut ym) = (y0, y0);
        yp[k] += h;
        ym[k] -= h;
        let fp = pack(&derivatives(p, d, &unpack(&yp), options).unwrap());
        let fm = pack(&derivatives(p, d, &unpack(&ym), options).unwrap());
        for r in 0..6 {
            jac[(r, k)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    let growth = jac
        .complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    to_hz(growth)
}

fn a6_ode_attractors() -> Outcome {
    let options = SteadyOptions {
        phonon_backaction: true,
    };
    let settings = VerifySettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let configs = a6_scenarios();
    let mut agree = 0;
    let mut bistable = 0;
    let mut middles = 0;
    let mut middles_escaped = 0;
    let mut disagreements = Vec::new();
    for (idx, (p, d)) in configs.iter().enumerate() {
        let branches = solve_steady(p, d, options).unwrap();
        bistable += (branches.len() == 3) as usize;
        let mut ok = true;
        for b in &branches {
            let report = match verify_branch(p, d, b, &settings, &mut rng) {
                Ok(r) => r,
                Err(e) => {
                    ok = false;
                    disagreements.push(format!("#{idx} {} error: {e}", b.label.as_str()));
                    continue;
                }
            };
            let expected = match b.stability {
                Stability::Stable => Verdict::Stable,
                Stability::Unstable => Verdict::Unstable,
                Stability::Marginal => Verdict::Inconclusive,
            };
            if report.verdict != expected {
                ok = false;
                disagreements.push(format!(
                    "#{idx} at {:.2} dBm: {} root {} by slope but {} in time domain (Jacobian growth rate {:+.3e} Hz)",
                    d.power_dbm,
                    b.label.as_str(),
                    b.stability.as_str(),
                    report.verdict.as_str(),
                    leading_growth_hz(p, d, b, options)
                ));
            }
            if branches.len() == 3 && b.occupation == branches[1].occupation {
                middles += 1;
                middles_escaped += (report.verdict == Verdict::Unstable) as usize;
            }
        }
        agree += ok as usize;
    }
    let n = configs.len();
    check(
        n == 50 && agree == n && middles_escaped == middles && bistable > 0,
        format!(
            "{agree}/{n} configurations agree ({bistable} bistable), {middles_escaped}/{middles} middle roots escape{}{}",
            if disagreements.is_empty() { "" } else { "; " },
            disagreements.join("; ")
        ),
    )
}

fn a7_pole_consistency() -> Outcome {
    let red = red_detuned().unwrap();
    let plan = SweepPlan::power(red.power_range.0, red.power_range.1, 251);
    let mut worst: f64 = 0.0;
    let mut worst_re: f64 = 0.0;
    let mut worst_width: f64 = 0.0;
    let mut count = 0;
    for power in plan.grid() {
        let d = red.drive.with_power(power);
        for b in solve_steady(&red.params, &d, SteadyOptions::default()).unwrap() {
            let op = OperatingPoint::new(&red.params, &d, &b);
            let pole = mechanical_pole(&op).unwrap();
            let spring = spring_shift(&op);
            let width = red.params.kappa_b + linewidth_change(&op);
            let predicted = Complex64::new(op.omega_b_tilde + spring, -0.5 * width);
            worst = worst.max((pole - predicted).norm() / predicted.norm());
            if spring.abs() > 0.0 {
                worst_re = worst_re.max(((pole.re - op.omega_b_tilde) / spring - 1.0).abs());
            }
            worst_width = worst_width.max(rel(-2.0 * pole.im, width));
            count += 1;
        }
    }
    check(
        worst <= 1e-3,
        format!(
            "{count} operating points, worst complex relative error {worst:.2e}; components: width {worst_width:.2e}, real shift vs spring {worst_re:.2e}"
        ),
    )
}

fn a8_transparency() -> Outcome {
    let red = red_detuned().unwrap();
    let branches = solve_steady(&red.params, &red.drive, SteadyOptions::default()).unwrap();
    let b = select_branch(&branches, Some(BranchHint::Upper)).unwrap();
    let op = OperatingPoint::new(&red.params, &red.drive, &b);
    let width = red.params.kappa_b + linewidth_change(&op);
    let centre = op.omega_b_tilde;
    let n = 24001;
    let grid: Vec<f64> = (0..n)
        .map(|i| centre - 6.0 * width + 12.0 * width * i as f64 / (n - 1) as f64)
        .collect();
    let s = reflection_spectrum(&op, &grid);
    let s2: Vec<f64> = s.iter().map(|v| v.norm_sqr()).collect();

    let extrema: Vec<usize> = (1..n - 1)
        .filter(|&i| {
            (s2[i] > s2[i - 1] && s2[i] >= s2[i + 1]) || (s2[i] < s2[i - 1] && s2[i] <= s2[i + 1])
        })
        .collect();
    let nearest = extrema
        .iter()
        .copied()
        .min_by(|&i, &j| (grid[i] - centre).abs().partial_cmp(&(grid[j] - centre).abs()).unwrap());
    let offset = nearest.map(|i| grid[i] - centre);

    // Mechanical part of the response against the same spectrum with the
    // magnon-phonon coupling removed.
    let mut bare = op;
    bare.params.g_mb = 0.0;
    let background = reflection_spectrum(&bare, &grid);
    let feature: Vec<f64> = s.iter().zip(&background).map(|(a, b)| (a - b).norm_sqr()).collect();
    let peak = (0..n).max_by(|&i, &j| feature[i].partial_cmp(&feature[j]).unwrap()).unwrap();
    let half = 0.5 * feature[peak];
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev: Option<usize> = None;
        for i in range {
            if feature[i] < half {
                let j = prev?;
                let t = (feature[j] - half) / (feature[j] - feature[i]);
                return Some(grid[j] + t * (grid[i] - grid[j]));
            }
            prev = Some(i);
        }
        None
    };
    let fwhm = match (crossing(&mut (0..=peak).rev()), crossing(&mut (peak..n))) {
        (Some(l), Some(r)) => Some(r - l),
        _ => None,
    };
    let pass = offset.is_some_and(|o| o.abs() <= width)
        && fwhm.is_some_and(|w| rel(w, width) <= 0.2);
    check(
        pass,
        format!(
            "extremum at {} Hz from the dressed mechanics (window +/-{:.1} Hz), feature FWHM {} Hz vs kappa_b + dGamma = {:.1} Hz",
            offset.map_or("none".into(), |o| format!("{:.1}", to_hz(o))),
            to_hz(width),
            fwhm.map_or("none".into(), |w| format!("{:.1}", to_hz(w))),
            to_hz(width)
        ),
    )
}

fn run_cli(args: &[&str], config: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_kerr-cmm"))
        .args(&args[..1])
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--svg")
        .args(&args[1..])
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn a9_determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/red_detuned.cfg");
    let tmp = tempfile::tempdir().unwrap();
    let commands: [&[&str]; 5] = [
        &["steady"],
        &["sweep"],
        &["spectrum"],
        &["calibrate", "--observed-nu-m-hz", "7.658e9", "--at-power-dbm", "4.7", "--branch", "lower"],
        &["verify"],
    ];
    let mut compared = 0;
    let mut failures = Vec::new();
    for args in commands {
        let dirs = [tmp.path().join(format!("{}-a", args[0])), tmp.path().join(format!("{}-b", args[0]))];
        if !dirs.iter().all(|d| run_cli(args, &config, d)) {
            failures.push(format!("{} failed to run", args[0]));
            continue;
        }
        let mut names: Vec<_> = std::fs::read_dir(&dirs[0])
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        for name in names {
            let a = std::fs::read(dirs[0].join(&name)).unwrap();
            let b = std::fs::read(dirs[1].join(&name)).unwrap_or_default();
            compared += 1;
            if a != b {
                failures.push(format!("{} differs", name.to_string_lossy()));
            }
        }
    }
    check(
        failures.is_empty() && compared >= 5,
        if failures.is_empty() {
            format!("{compared} output files byte-identical across two runs of each subcommand")
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("1 parameter consistency", a1_parameter_consistency, Duration::from_secs(1)),
        ("2 cross-Kerr chain", a2_cross_kerr_chain, Duration::from_secs(1)),
        ("3 cubic oracle", a3_cubic_oracle, Duration::from_secs(30)),
        ("4 hysteresis", a4_hysteresis, Duration::from_secs(5)),
        ("5 sign contract", a5_sign_contract, Duration::from_secs(5)),
        ("6 ODE attractors", a6_ode_attractors, Duration::from_secs(600)),
        ("7 pole consistency", a7_pole_consistency, Duration::from_secs(5)),
        ("8 transparency feature", a8_transparency, Duration::from_secs(5)),
        ("9 determinism", a9_determinism, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let v = f();
        let elapsed = start.elapsed();
        let pass = v.pass && elapsed <= budget;
        failed += (!pass) as usize;
        println!(
            "{} criterion {name}: {} [{:.2} s, budget {} s]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
