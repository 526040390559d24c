//! Acceptance checks. Runs as a plain binary (`harness = false`) so the
//! criteria execute in order and print one PASS/FAIL line each.

use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use selftune::adaptation::{validate_oscillator_hypotheses, AdaptationLaw};
use selftune::analysis::{
    empirical_decay_rate, floquet_multipliers, kyp_storage, linearize_equilibrium,
    lyapunov_monotonicity, positive_real_margin, sector_identity, trajectory_in_chart, FloquetMode,
};
use selftune::dynamics::{ChartTag, ClosedLoop, Perturbation};
use selftune::ode::{integrate, IntegratorConfig, Trajectory};
use selftune::scenario::Scenario;
use selftune::stabcert::{
    epsilon_residual_sweep, falsify_practical_stability, falsify_semiglobal_practical,
    witness_reproduces, Budget, Compact, EpsilonFamily,
};
use selftune::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed())
}

fn tight() -> IntegratorConfig {
    IntegratorConfig::adaptive(1e-12, 1e-12)
}

// 1. First-order loop with the log law is the linear system q' = p, p' = -a q - b p.
fn linear_equivalence() -> Outcome {
    let (a, b, mu0) = (1.0, 2.0, 0.7);
    let (o, elapsed) = timed(|| {
        let system = ClosedLoop::first_order(mu0, AdaptationLaw::log(a, b).unwrap()).unwrap();
        let traj = integrate(&system, &[2.0, 0.0], 0.0, 20.0, &tight()).unwrap();
        let chart = trajectory_in_chart(&system, &traj, ChartTag::Log).unwrap();
        let (q0, p0) = (chart.states[0][0], chart.states[0][1]);
        // Repeated eigenvalue -1: z(t) = e^{-t} (z0 + t (A + I) z0).
        let exact = |t: f64| {
            let s = p0 + q0;
            ((q0 + s * t) * (-t).exp(), (p0 - s * t) * (-t).exp())
        };
        let err = chart
            .iter()
            .map(|(t, z)| {
                let (q, p) = exact(t);
                (z[0] - q).abs().max((z[1] - p).abs())
            })
            .fold(0.0, f64::max);
        outcome(
            err <= 1e-7,
            format!("max |z - z_exact| = {err:.2e} over {} samples", chart.len()),
        )
    });
    let pass = o.pass && elapsed < Duration::from_secs(1);
    outcome(pass, format!("{}, {elapsed:.2?}", o.detail))
}

fn convergence_runs() -> Vec<(String, AdaptationLaw, f64, ClosedLoop, Trajectory)> {
    let mut runs = Vec::new();
    for law in [
        AdaptationLaw::log(1.0, 1.0).unwrap(),
        AdaptationLaw::Sigmoid,
    ] {
        for mu0 in [-1.0, 0.0, 0.5, 1.0] {
            let system = ClosedLoop::first_order(mu0, law.clone()).unwrap();
            let traj = integrate(
                &system,
                &[2.0, 0.0],
                0.0,
                200.0,
                &IntegratorConfig::default(),
            )
            .unwrap();
            runs.push((law.name().to_string(), law.clone(), mu0, system, traj));
        }
    }
    runs
}

// 2. First-order convergence of mu to mu0.
fn first_order_convergence(
    runs: &[(String, AdaptationLaw, f64, ClosedLoop, Trajectory)],
    elapsed: Duration,
) -> Outcome {
    let worst = runs
        .iter()
        .map(|(name, _, mu0, _, traj)| ((traj.last_state()[1] - mu0).abs(), name.clone(), *mu0))
        .fold(
            (0.0, String::new(), 0.0),
            |acc, x| if x.0 > acc.0 { x } else { acc },
        );
    outcome(
        worst.0 <= 1e-4 && elapsed < Duration::from_secs(5),
        format!(
            "worst |mu(200) - mu0| = {:.2e} ({} law, mu0 = {}), {} runs in {elapsed:.2?}",
            worst.0,
            worst.1,
            worst.2,
            runs.len()
        ),
    )
}

// 3. V(q, p) is non-increasing along the same trajectories.
fn lyapunov_decrease(runs: &[(String, AdaptationLaw, f64, ClosedLoop, Trajectory)]) -> Outcome {
    let worst = runs
        .iter()
        .map(|(_, law, mu0, system, traj)| {
            let chart = trajectory_in_chart(system, traj, ChartTag::Log).unwrap();
            lyapunov_monotonicity(&chart, law, *mu0).unwrap()
        })
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-8,
        format!("max V increase between samples = {worst:.2e}"),
    )
}

// 4. Linearisation of the sigmoid loop at mu0 = 0.
fn linearization() -> Outcome {
    let lin = linearize_equilibrium(&AdaptationLaw::Sigmoid, 0.0).unwrap();
    let exact = lin.matrix == [[0.0, 1.0], [-0.5, -0.25]];
    let slow = lin.slow_rate();
    let fitted = empirical_decay_rate(&AdaptationLaw::Sigmoid, 0.0, 1e-3, 80.0).unwrap();
    let rel = (fitted - slow).abs() / slow.abs();
    outcome(
        exact && rel <= 0.05,
        format!(
            "matrix {:?}, slow eigenvalue re {slow:.5}, fitted decay {fitted:.5} ({:.2}% off)",
            lin.matrix,
            100.0 * rel
        ),
    )
}

// 5. Positive-real boundary and KYP feasibility agree on a grid.
fn positive_real_boundary() -> Outcome {
    let m_boundary = positive_real_margin(4.0, 2.0);
    let m_outside = positive_real_margin(4.1, 2.0);
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for b in [0.5, 1.0, 2.0] {
        for a in [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0] {
            let feasible_margin = positive_real_margin(a, b) >= 0.0;
            let feasible_kyp = match kyp_storage(a, b, 1) {
                Ok(c) => c.storage.is_positive_definite(),
                Err(Error::Infeasible { .. }) => false,
                Err(e) => panic!("{e}"),
            };
            checked += 1;
            if feasible_margin != feasible_kyp {
                mismatches.push((a, b));
            }
        }
    }
    // Random-sample check of the storage inequality for a = 1, b = 2.
    let cert = kyp_storage(1.0, 2.0, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let worst = (0..10_000)
        .map(|_| {
            let (q, p, u) = (
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            cert.storage.kyp_residual(1.0, 2.0, q, p, u)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        m_boundary.abs() <= 1e-12 && m_outside < 0.0 && mismatches.is_empty() && worst <= 1e-9,
        format!(
            "margin(4,2) = {m_boundary:e}, margin(4.1,2) = {m_outside:.4}, {checked} grid points, mismatches {mismatches:?}, max sampled V' - up - u^2 = {worst:.2e}"
        ),
    )
}

// 6. Sector identity on random samples.
fn sector() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let worst = (0..10_000)
        .map(|_| {
            let phi = rng.random_range(0.0..TAU);
            let p = rng.random_range(-100.0..100.0);
            let (lhs, rhs) = sector_identity(phi, p);
            // Relative to the magnitude of the summands u p and u^2, which cancel as sin^2 -> 1.
            let u = -phi.sin().powi(2) * p;
            let scale = (u * p).abs() + u * u;
            if scale == 0.0 {
                0.0
            } else {
                (lhs - rhs).abs() / scale
            }
        })
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-12,
        format!("max relative error {worst:.2e} over 10^4 samples"),
    )
}

// 7. Oscillator with the log law tunes to mu0 and the orbit radius exp(-b mu0 / a).
fn oscillator_convergence() -> Outcome {
    let (o, elapsed) = timed(|| {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/hair-cell.toml");
        let s = Scenario::load(&path).unwrap();
        let system = s.closed_loop().unwrap();
        let traj = integrate(
            &system,
            &s.initial_state(),
            0.0,
            300.0,
            &s.integrator.config().unwrap(),
        )
        .unwrap();
        let y = traj.last_state();
        let mu_err = (y[2] - 0.3).abs();
        let r = system.amplitude(y);
        let r_err = (r - (-0.3f64).exp()).abs();
        outcome(
            mu_err <= 1e-5 && r_err <= 1e-4,
            format!("|mu(300) - mu0| = {mu_err:.2e}, r = {r:.7} (|r - e^-0.3| = {r_err:.2e})"),
        )
    });
    outcome(
        o.pass && elapsed < Duration::from_secs(5),
        format!("{}, {elapsed:.2?}", o.detail),
    )
}

// 8. Floquet multipliers of the tuned orbit.
fn floquet() -> Outcome {
    let mut worst_radius: f64 = 0.0;
    let mut worst_det: f64 = 0.0;
    for (a, b, omega) in [(1.0, 1.0, 1.0), (0.25, 1.0, 1.0), (1.0, 2.0, 5.0)] {
        let r = floquet_multipliers(
            &AdaptationLaw::log(a, b).unwrap(),
            0.3,
            omega,
            FloquetMode::Reduced,
        )
        .unwrap();
        worst_radius = worst_radius.max(r.spectral_radius);
        worst_det = worst_det.max((r.det() - (-b * r.period).exp()).abs());
    }
    let r = floquet_multipliers(
        &AdaptationLaw::log(1.0, 2.0).unwrap(),
        0.3,
        100.0,
        FloquetMode::Reduced,
    )
    .unwrap();
    worst_det = worst_det.max((r.det() - (-2.0 * r.period).exp()).abs());
    // Averaged matrix [[0, 1/2], [-1, -2]]: eigenvalues -1 +- sqrt(1/2).
    let averaged = [
        (-1.0 + 0.5f64.sqrt()) * r.period,
        (-1.0 - 0.5f64.sqrt()) * r.period,
    ]
    .map(f64::exp);
    let avg_err = (0..2)
        .map(|i| (r.multiplier(i) - Complex64::new(averaged[i], 0.0)).norm() / averaged[i])
        .fold(0.0, f64::max);
    outcome(
        worst_radius < 1.0 && avg_err <= 0.02 && worst_det <= 1e-8,
        format!(
            "max spectral radius {worst_radius:.4}, omega = 100 vs averaged {:.3}%, max |det - e^(-bT)| = {worst_det:.2e}",
            100.0 * avg_err
        ),
    )
}

// 9. Oscillator hypothesis check for the bounded law: a = 4 b^2 is the edge.
fn bounded_law_hypotheses() -> Outcome {
    let mut edge_failures = Vec::new();
    let mut beyond_failures = 0;
    for b in [0.5, 1.0, 2.0] {
        let mu0s: Vec<f64> = (1..50).map(|k| k as f64 / (50.0 * b)).collect();
        let edge = AdaptationLaw::bounded_osc(4.0 * b * b, b).unwrap();
        let beyond = AdaptationLaw::bounded_osc(4.0 * b * b + 0.4, b).unwrap();
        for &mu0 in &mu0s {
            if !validate_oscillator_hypotheses(&edge, mu0, 1.0)
                .unwrap()
                .passed()
            {
                edge_failures.push((b, mu0));
            }
        }
        if mu0s.iter().any(|&mu0| {
            !validate_oscillator_hypotheses(&beyond, mu0, 1.0)
                .unwrap()
                .passed()
        }) {
            beyond_failures += 1;
        }
    }
    outcome(
        edge_failures.is_empty() && beyond_failures == 3,
        format!("a = 4b^2 failures {edge_failures:?}; a = 4b^2 + 0.4 rejected for {beyond_failures}/3 values of b"),
    )
}

// 10. Practical stability under p = sin t, eps = 1e-3, and residuals shrinking with eps.
fn practical_stability() -> Outcome {
    let (o, elapsed) = timed(|| {
        let pert = Perturbation::new(1e-3, "sin(t)").unwrap();
        let first = ClosedLoop::first_order(0.0, AdaptationLaw::Sigmoid)
            .unwrap()
            .with_perturbation(Some(pert.clone()))
            .unwrap();
        let osc = ClosedLoop::oscillator(0.3, 1.0, AdaptationLaw::log(1.0, 1.0).unwrap())
            .unwrap()
            .with_perturbation(Some(pert))
            .unwrap();
        let cases = [
            (
                "first-order",
                first,
                Compact::Box {
                    lower: vec![0.1, -2.0],
                    upper: vec![10.0, 2.0],
                },
            ),
            ("oscillator", osc, Compact::ChartBall { radius: 1.0 }),
        ];
        let budget = Budget::default();
        let mut pass = true;
        let mut detail = Vec::new();
        for (name, system, k) in cases {
            let family = EpsilonFamily::new(system).unwrap();
            let practical = falsify_practical_stability(&family, 0.05, &budget).unwrap();
            let semiglobal = falsify_semiglobal_practical(&family, &k, 0.05, &budget).unwrap();
            let sweep = epsilon_residual_sweep(
                &family,
                &[1e-1, 1e-2, 1e-3],
                200.0,
                &IntegratorConfig::default(),
            )
            .unwrap();
            let residuals: Vec<String> = sweep
                .points
                .iter()
                .map(|p| format!("{:.2e}", p.residual))
                .collect();
            pass &= !practical.is_falsified()
                && !semiglobal.is_falsified()
                && sweep.strictly_decreasing();
            detail.push(format!(
                "{name}: practical {}, semiglobal {}, residuals [{}]",
                verdict_word(practical.is_falsified()),
                verdict_word(semiglobal.is_falsified()),
                residuals.join(", ")
            ));
        }
        outcome(pass, detail.join("; "))
    });
    outcome(
        o.pass && elapsed < Duration::from_secs(60),
        format!("{}, {elapsed:.2?}", o.detail),
    )
}

fn verdict_word(falsified: bool) -> &'static str {
    if falsified {
        "falsified"
    } else {
        "not falsified"
    }
}

// 11. Negative controls.
fn negative_controls() -> Outcome {
    let flipped = AdaptationLaw::custom("ln(x)", "mu").unwrap();
    let family = EpsilonFamily::new(ClosedLoop::first_order(0.0, flipped).unwrap()).unwrap();
    let budget = Budget::default();
    let verdict = falsify_practical_stability(&family, 0.05, &budget).unwrap();
    let replayable = verdict
        .witness()
        .is_some_and(|w| witness_reproduces(&family, w, &budget.integrator));

    let src = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/neural-integrator.toml"),
    )
    .unwrap()
    .replace("x = 2.0", "x = 0.0");
    let rejected = matches!(
        Scenario::from_toml(&src),
        Err(Error::DomainViolation { .. })
    );
    let system = ClosedLoop::first_order(0.5, AdaptationLaw::log(1.0, 1.0).unwrap()).unwrap();
    let direct = matches!(
        integrate(&system, &[0.0, 0.0], 0.0, 1.0, &IntegratorConfig::default()),
        Err(Error::DomainViolation { .. })
    );
    let w = verdict.witness();
    outcome(
        verdict.is_falsified() && replayable && rejected && direct,
        format!(
            "flipped law {} (witness escapes to {:.3} at t = {:.2}, replay {}), x(0) = 0 rejected: scenario {rejected}, integrator {direct}",
            verdict_word(verdict.is_falsified()),
            w.map_or(f64::NAN, |w| w.violation_distance),
            w.map_or(f64::NAN, |w| w.violation_time),
            if replayable { "reproduces" } else { "differs" },
        ),
    )
}

// 12. Same config and seed give byte-identical outputs.
fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_selftune");
    let presets = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str], files: &[&str]| -> Vec<Vec<u8>> {
        let out = Command::new(bin)
            .args(args)
            .env("SELFTUNE_OUT_DIR", dir.path())
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        files
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
            .collect()
    };
    let mut identical = true;
    let mut compared = 0;
    for (args, files) in [
        (
            vec!["--seed", "11", "simulate", "hair-cell.toml"],
            vec!["hair-cell.csv", "hair-cell.report.json"],
        ),
        (
            vec![
                "--seed",
                "11",
                "certify",
                "sigmoid-perturbed.toml",
                "--horizon",
                "100",
            ],
            vec!["sigmoid-perturbed.certify.json"],
        ),
    ] {
        let mut args = args.clone();
        let cfg = presets.join(args.iter().find(|a| a.ends_with(".toml")).unwrap());
        let cfg = cfg.to_str().unwrap().to_string();
        for a in args.iter_mut() {
            if a.ends_with(".toml") {
                *a = &cfg;
            }
        }
        let first = run(&args, &files);
        let second = run(&args, &files);
        identical &= first == second;
        compared += files.len();
    }
    outcome(
        identical,
        format!("{compared} output files compared across two runs"),
    )
}

fn main() {
    let mut failures = 0;
    let mut line = |id: usize, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2} {name}: {}", o.detail);
        if !o.pass {
            failures += 1;
        }
    };
    let start = Instant::now();
    line(
        1,
        "linear equivalence in the log chart",
        linear_equivalence(),
    );
    let t = Instant::now();
    let runs = convergence_runs();
    let elapsed = t.elapsed();
    line(
        2,
        "first-order convergence",
        first_order_convergence(&runs, elapsed),
    );
    line(3, "Lyapunov decrease", lyapunov_decrease(&runs));
    line(4, "linearisation and decay rate", linearization());
    line(
        5,
        "positive-real boundary and KYP storage",
        positive_real_boundary(),
    );
    line(6, "sector identity", sector());
    line(7, "oscillator convergence", oscillator_convergence());
    line(8, "Floquet multipliers", floquet());
    line(9, "bounded-law hypothesis edge", bounded_law_hypotheses());
    line(
        10,
        "practical stability under perturbation",
        practical_stability(),
    );
    line(11, "negative controls", negative_controls());
    line(12, "determinism", determinism());
    println!(
        "acceptance: {} of 12 passed in {:.2?}",
        12 - failures,
        start.elapsed()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
