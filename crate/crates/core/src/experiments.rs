//! Batch experiments built on [`crate::scenario`]: parameter sweeps, forced
//! response curves, stability searches and the analysis reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptation::{effective_coefficients, AdaptationLaw};
use crate::analysis::{
    floquet_multipliers, kyp_storage, linearize_equilibrium, positive_real_margin, sector_identity,
    storage_max_increase, trajectory_in_chart, FloquetMode, FloquetResult, KypCertificate,
    Linearization, LyapunovFunction,
};
use crate::dynamics::ChartTag;
use crate::error::{Error, Result};
use crate::scenario::{
    format_float, simulate, with_parameter, CertifyClause, CertifySection, Scenario,
};
use crate::stabcert::{
    epsilon_residual_sweep, falsify_practical_stability, falsify_semiglobal_practical, Compact,
    EpsilonFamily, ResidualSweep, Verdict,
};

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Validation(format!("csv: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Validation(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// Parse a comma-separated list of numbers.
pub fn parse_list(src: &str) -> Result<Vec<f64>> {
    let values = src
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Validation(format!("'{s}' is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Validation("empty value list".into()));
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub final_mu_error: Option<f64>,
    pub settle_time: Option<f64>,
    pub residual: Option<f64>,
    /// Floquet spectral radius of the tuned orbit (oscillators only).
    pub spectral_radius: Option<f64>,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: [&str; 7] = [
    "param",
    "value",
    "final_mu_error",
    "settle_time",
    "residual",
    "spectral_radius",
    "error",
];

/// One simulation per value of `param`; rows keep the order of `values`.
/// Failing rows carry their error and the sweep continues.
pub fn run_sweep(scenario: &Scenario, param: &str, values: &[String]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Validation("sweep value list is empty".into()));
    }
    // An unknown parameter is a configuration error, not a row failure.
    with_parameter(scenario, param, &values[0])
        .map(|_| ())
        .or_else(|e| match e {
            Error::Validation(msg) if msg.contains("is not set") => Err(Error::Validation(msg)),
            _ => Ok(()),
        })?;
    Ok(values
        .par_iter()
        .map(|value| sweep_row(scenario, param, value))
        .collect())
}

fn sweep_row(scenario: &Scenario, param: &str, value: &str) -> SweepRow {
    let mut row = SweepRow {
        param: param.to_string(),
        value: value.to_string(),
        final_mu_error: None,
        settle_time: None,
        residual: None,
        spectral_radius: None,
        error: None,
    };
    let run = with_parameter(scenario, param, value).and_then(|s| simulate(&s).map(|r| (s, r)));
    match run {
        Ok((s, run)) => {
            row.final_mu_error = Some(run.report.final_mu_error);
            row.settle_time = run.report.settle_time;
            row.residual = run.report.residual;
            if let (true, Some(w)) = (s.system.is_oscillator(), s.model.omega) {
                match floquet_multipliers(&s.law, s.model.mu0, w, FloquetMode::Reduced) {
                    Ok(f) => row.spectral_radius = Some(f.spectral_radius),
                    Err(e) => row.error = Some(format!("{}: {e}", e.kind())),
                }
            }
        }
        Err(e) => row.error = Some(format!("{}: {e}", e.kind())),
    }
    row
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    csv_string(
        &SWEEP_HEADER,
        rows.iter().map(|r| {
            vec![
                r.param.clone(),
                r.value.clone(),
                opt_float(r.final_mu_error),
                opt_float(r.settle_time),
                opt_float(r.residual),
                opt_float(r.spectral_radius),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

// ---------------------------------------------------------------------------
// Forced response
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub amplitude: f64,
    /// `max |x|` over the last quarter of the run.
    pub response: f64,
    /// Log-log slope from the previous point (both amplitudes positive).
    pub slope: Option<f64>,
    /// The two halves of the measurement window differ by more than 5%.
    pub unsettled: bool,
}

pub const GAIN_HEADER: [&str; 4] = ["amplitude", "response", "slope", "unsettled"];
pub const UNSETTLED_TOL: f64 = 0.05;

/// Response amplitude of the cubic oscillator to `F cos(w t)` for each `F`.
/// `frozen_mu` replaces adaptation with a constant `mu` (control runs).
pub fn gain_curve(
    scenario: &Scenario,
    amplitudes: &[f64],
    frozen_mu: Option<f64>,
) -> Result<Vec<GainPoint>> {
    if amplitudes.is_empty() {
        return Err(Error::Validation("amplitude list is empty".into()));
    }
    if amplitudes.iter().any(|f| !(*f >= 0.0 && f.is_finite()))
        || amplitudes.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::Validation(
            "amplitudes must be >= 0 and strictly increasing".into(),
        ));
    }
    if !scenario.system.is_oscillator() || !(scenario.model.lambda.unwrap_or(0.0) > 0.0) {
        return Err(Error::Validation(
            "gain curves need an oscillator_full system with lambda > 0".into(),
        ));
    }
    let frequency = scenario
        .forcing
        .as_ref()
        .and_then(|f| f.frequency)
        .or(scenario.model.omega)
        .expect("oscillator has omega");
    let responses = amplitudes
        .par_iter()
        .map(|&amp| {
            let mut s = scenario.clone();
            s.forcing = Some(crate::scenario::ForcingSection {
                u: None,
                amplitude: Some(amp),
                frequency: Some(frequency),
            });
            if frozen_mu.is_some() {
                s.model.frozen_mu = frozen_mu;
            }
            let run = simulate(&s)?;
            let traj = &run.trajectory;
            let t_end = traj.last_time();
            let t_start = traj.times[0] + 0.75 * (t_end - traj.times[0]);
            let t_mid = 0.5 * (t_start + t_end);
            let (mut first, mut second) = (0.0f64, 0.0f64);
            for (t, y) in traj.iter().filter(|(t, _)| *t >= t_start) {
                if t < t_mid {
                    first = first.max(y[0].abs());
                } else {
                    second = second.max(y[0].abs());
                }
            }
            let response = first.max(second);
            let unsettled = (first - second).abs() > UNSETTLED_TOL * response;
            Ok((response, unsettled))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(amplitudes
        .iter()
        .zip(&responses)
        .enumerate()
        .map(|(i, (&amp, &(response, unsettled)))| {
            let slope = (i > 0 && amplitudes[i - 1] > 0.0)
                .then(|| (response / responses[i - 1].0).ln() / (amp / amplitudes[i - 1]).ln());
            GainPoint {
                amplitude: amp,
                response,
                slope,
                unsettled,
            }
        })
        .collect())
}

pub fn gain_csv(points: &[GainPoint]) -> Result<String> {
    csv_string(
        &GAIN_HEADER,
        points.iter().map(|p| {
            vec![
                format_float(p.amplitude),
                format_float(p.response),
                opt_float(p.slope),
                p.unsettled.to_string(),
            ]
        }),
    )
}

// ---------------------------------------------------------------------------
// Stability search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub name: String,
    pub seed: u64,
    pub settings: CertifySection,
    pub verdict: Verdict,
    pub residual_sweep: Option<ResidualSweep>,
    /// Set when the sweep could not be integrated, e.g. for a diverging loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_sweep_error: Option<String>,
}

/// Run the stability search configured in the scenario's `[certify]` table
/// (defaults when absent). The budget seed is the scenario seed.
pub fn certify(scenario: &Scenario) -> Result<CertifyReport> {
    let mut settings = scenario.certify.clone().unwrap_or_default();
    settings.budget.seed = scenario.seed;
    let family = EpsilonFamily::new(scenario.closed_loop()?)?;
    let verdict = match settings.clause {
        CertifyClause::Practical => {
            falsify_practical_stability(&family, settings.radius, &settings.budget)?
        }
        CertifyClause::Semiglobal => {
            let k = settings
                .compact
                .clone()
                .unwrap_or(Compact::ChartBall { radius: 1.0 });
            falsify_semiglobal_practical(&family, &k, settings.radius, &settings.budget)?
        }
    };
    let (residual_sweep, residual_sweep_error) = match &settings.sweep_epsilons {
        Some(eps) => match epsilon_residual_sweep(
            &family,
            eps,
            settings.sweep_horizon,
            &settings.budget.integrator,
        ) {
            Ok(sweep) => (Some(sweep), None),
            Err(e) if e.is_integration_failure() => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        },
        None => (None, None),
    };
    Ok(CertifyReport {
        name: scenario.name.clone(),
        seed: scenario.seed,
        settings,
        verdict,
        residual_sweep,
        residual_sweep_error,
    })
}

// ---------------------------------------------------------------------------
// Analyses
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Lyapunov,
    Kyp,
    PositiveReal,
    Floquet,
    Linearize,
    Sector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "kebab-case")]
pub enum AnalysisReport {
    Lyapunov {
        initial_value: f64,
        final_value: f64,
        max_increase: f64,
        samples: usize,
    },
    Kyp {
        a: f64,
        b: f64,
        margin: f64,
        feasible: bool,
        certificate: Option<KypCertificate>,
        best_eigenvalue: f64,
        /// Largest storage increase along the simulated trajectory (log-law oscillators).
        trajectory_max_increase: Option<f64>,
    },
    PositiveReal {
        a: f64,
        b: f64,
        margin: f64,
    },
    Floquet {
        mode: FloquetMode,
        result: FloquetResult,
    },
    Linearize {
        result: Linearization,
    },
    Sector {
        samples: usize,
        max_relative_error: f64,
    },
}

pub const SECTOR_SAMPLES: usize = 10_000;

/// Linear block coefficients `(a, b)` of the scenario's law at its target.
fn linear_coefficients(scenario: &Scenario) -> Result<(f64, f64)> {
    match scenario.law {
        AdaptationLaw::Log { a, b } => Ok((a, b)),
        _ => {
            let c = effective_coefficients(&scenario.law, scenario.model.mu0)?;
            Ok((c.a_eff, c.b_eff))
        }
    }
}

pub fn analyze(
    scenario: &Scenario,
    what: Analysis,
    floquet_mode: FloquetMode,
) -> Result<AnalysisReport> {
    scenario.validate()?;
    let mu0 = scenario.model.mu0;
    match what {
        Analysis::Lyapunov => {
            if scenario.system.is_oscillator() {
                return Err(Error::ChartMismatch {
                    chart: "log (q, p)".into(),
                    system: "oscillator (use --what kyp)".into(),
                });
            }
            let run = simulate(scenario)?;
            let system = scenario.closed_loop()?;
            let chart = trajectory_in_chart(&system, &run.trajectory, ChartTag::Log)?;
            let v = LyapunovFunction::new(&scenario.law, mu0)?;
            let first = &chart.states[0];
            let last = chart.last_state();
            Ok(AnalysisReport::Lyapunov {
                initial_value: v.value(first[0], first[1]),
                final_value: v.value(last[0], last[1]),
                max_increase: v.max_increase(&chart)?,
                samples: chart.len(),
            })
        }
        Analysis::Kyp => {
            let (a, b) = linear_coefficients(scenario)?;
            let margin = positive_real_margin(a, b);
            let (certificate, best) = match kyp_storage(a, b, scenario.seed) {
                Ok(c) => (Some(c), c.max_eigenvalue),
                Err(Error::Infeasible { best_eigenvalue }) => (None, best_eigenvalue),
                Err(e) => return Err(e),
            };
            let trajectory_max_increase =
                match (&certificate, &scenario.law, scenario.system.is_oscillator()) {
                    (Some(c), AdaptationLaw::Log { .. }, true) => {
                        let run = simulate(scenario)?;
                        Some(storage_max_increase(
                            &scenario.closed_loop()?,
                            &run.trajectory,
                            &c.storage,
                        )?)
                    }
                    _ => None,
                };
            Ok(AnalysisReport::Kyp {
                a,
                b,
                margin,
                feasible: certificate.is_some(),
                certificate,
                best_eigenvalue: best,
                trajectory_max_increase,
            })
        }
        Analysis::PositiveReal => {
            let (a, b) = linear_coefficients(scenario)?;
            Ok(AnalysisReport::PositiveReal {
                a,
                b,
                margin: positive_real_margin(a, b),
            })
        }
        Analysis::Floquet => {
            let omega = scenario
                .model
                .omega
                .filter(|_| scenario.system.is_oscillator())
                .ok_or_else(|| Error::ChartMismatch {
                    chart: "orbit".into(),
                    system: "first-order".into(),
                })?;
            Ok(AnalysisReport::Floquet {
                mode: floquet_mode,
                result: floquet_multipliers(&scenario.law, mu0, omega, floquet_mode)?,
            })
        }
        Analysis::Linearize => Ok(AnalysisReport::Linearize {
            result: linearize_equilibrium(&scenario.law, mu0)?,
        }),
        Analysis::Sector => {
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
            let max_relative_error = (0..SECTOR_SAMPLES)
                .map(|_| {
                    let phi = rng.random_range(0.0..std::f64::consts::TAU);
                    let p = rng.random_range(-10.0..10.0);
                    let (lhs, rhs) = sector_identity(phi, p);
                    (lhs - rhs).abs() / (1.0 + lhs.abs())
                })
                .fold(0.0, f64::max);
            Ok(AnalysisReport::Sector {
                samples: SECTOR_SAMPLES,
                max_relative_error,
            })
        }
    }
}
