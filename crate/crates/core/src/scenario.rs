//! Scenario files, simulation runs and their reports.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "hair-cell"
//! system = "oscillator"      # first_order | oscillator | oscillator_full
//! seed = 0
//!
//! [model]
//! mu0 = 0.3
//! omega = 1.0
//!
//! [law]
//! kind = "log"               # log | sigmoid | bounded_osc | custom
//! a = 1.0
//! b = 1.0
//!
//! [initial]
//! x = 2.0
//! xdot = 0.0
//! mu = 0.0
//!
//! [time]
//! horizon = 300.0
//! ```
//!
//! Optional tables: `[integrator]`, `[perturbation]`, `[forcing]`, `[report]`
//! and `[certify]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptation::{
    validate_convergence_hypotheses, validate_oscillator_hypotheses, AdaptationLaw,
    HypothesisReport,
};
use crate::dynamics::{
    ChartTag, ClosedLoop, FirstOrderModel, OscillatorModel, Perturbation, Plant,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::ode::{integrate, IntegratorConfig, Method, StepStats, Trajectory, DEFAULT_TOL};
use crate::stabcert::{Budget, Compact, TargetSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    FirstOrder,
    /// Oscillator without the cubic term (`lambda = 0`).
    Oscillator,
    /// Oscillator with cubic damping `lambda xdot^3`.
    OscillatorFull,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::FirstOrder => "first_order",
            SystemKind::Oscillator => "oscillator",
            SystemKind::OscillatorFull => "oscillator_full",
        }
    }

    pub fn is_oscillator(self) -> bool {
        !matches!(self, SystemKind::FirstOrder)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub mu0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Chart anchor `x*` / `r*`, for laws where `f(x) = g(mu0)` has several roots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<f64>,
    /// Hold `mu` at this value instead of adapting it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xdot: Option<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default)]
    pub t0: f64,
    /// Defaults to 100 periods for oscillators; required for first-order runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartChoice {
    /// Integrate in the original coordinates.
    #[default]
    Original,
    /// Integrate in the `(q, p)` chart (first-order) or `(q, phi, p)` chart
    /// (oscillator) and map back.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMode {
    Fixed,
    #[default]
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub mode: IntegratorMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    pub domain_guard: bool,
    pub chart: ChartChoice,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            mode: IntegratorMode::Adaptive,
            step: None,
            abs_tol: DEFAULT_TOL,
            rel_tol: DEFAULT_TOL,
            max_steps: None,
            domain_guard: true,
            chart: ChartChoice::Original,
        }
    }
}

impl IntegratorSection {
    pub fn config(&self) -> Result<IntegratorConfig> {
        let mut cfg =
            match self.mode {
                IntegratorMode::Adaptive => IntegratorConfig::adaptive(self.abs_tol, self.rel_tol),
                IntegratorMode::Fixed => IntegratorConfig::fixed(self.step.ok_or_else(|| {
                    Error::Validation("integrator mode 'fixed' needs 'step'".into())
                })?),
            };
        if let (Some(h), Method::Adaptive { .. }) = (self.step, cfg.method) {
            cfg = cfg.with_initial_step(h);
        }
        if let Some(n) = self.max_steps {
            cfg.max_steps = n;
        }
        cfg.domain_guard = self.domain_guard;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// External input `u(t)`: either an expression or `amplitude * cos(frequency * t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Defaults to the oscillator frequency `omega`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub settle_band: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { settle_band: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifyClause {
    #[default]
    Practical,
    Semiglobal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifySection {
    pub clause: CertifyClause,
    /// `U2` radius (practical) or `U` radius (semiglobal).
    pub radius: f64,
    /// Initial compact for the semiglobal clauses; defaults to a chart ball of radius 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compact: Option<Compact>,
    /// `eps` values for a residual sweep run alongside the search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_epsilons: Option<Vec<f64>>,
    pub sweep_horizon: f64,
    pub budget: Budget,
}

impl Default for CertifySection {
    fn default() -> Self {
        Self {
            clause: CertifyClause::Practical,
            radius: 0.05,
            compact: None,
            sweep_epsilons: None,
            sweep_horizon: crate::stabcert::DEFAULT_SWEEP_HORIZON,
            budget: Budget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub system: SystemKind,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    pub law: AdaptationLaw,
    pub initial: InitialSection,
    pub time: TimeSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingSection>,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySection>,
}

fn default_name() -> String {
    "scenario".into()
}

/// Periods covered by the default oscillator horizon.
pub const DEFAULT_PERIODS: f64 = 100.0;

impl Scenario {
    pub fn from_toml(src: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(src)
            .map_err(|e| Error::Validation(format!("scenario: {}", e.message())))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&src)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self)
            .map_err(|e| Error::Validation(format!("cannot serialise scenario: {e}")))
    }

    /// Check every section and the initial state.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Validation(format!(
                "invalid scenario name {:?}",
                self.name
            )));
        }
        let system = self.closed_loop()?;
        self.integrator.config()?;
        let horizon = self.horizon()?;
        if !(horizon > 0.0 && horizon.is_finite() && self.time.t0.is_finite()) {
            return Err(Error::Validation(format!(
                "horizon must be > 0, got {horizon}"
            )));
        }
        if !(self.report.settle_band > 0.0) {
            return Err(Error::Validation("settle_band must be > 0".into()));
        }
        if self.integrator.chart == ChartChoice::Log && self.model.frozen_mu.is_some() {
            return Err(Error::Validation("chart 'log' needs an adapting mu".into()));
        }
        if let Some(c) = &self.certify {
            if !(c.radius > 0.0) {
                return Err(Error::Validation("certify radius must be > 0".into()));
            }
            c.budget.validate()?;
        }
        let y0 = self.initial_state();
        system.check_state(&y0).map_err(|e| match e {
            Error::DomainViolation { reason, .. } => Error::DomainViolation {
                t: self.time.t0,
                reason: format!("initial {reason}"),
            },
            other => other,
        })
    }

    pub fn horizon(&self) -> Result<f64> {
        match (self.time.horizon, self.model.omega) {
            (Some(h), _) => Ok(h),
            (None, Some(w)) if self.system.is_oscillator() && w > 0.0 => {
                Ok(DEFAULT_PERIODS * std::f64::consts::TAU / w)
            }
            _ => Err(Error::Validation("time.horizon is required".into())),
        }
    }

    pub fn t1(&self) -> Result<f64> {
        Ok(self.time.t0 + self.horizon()?)
    }

    fn forcing_expr(&self) -> Result<Option<Expr>> {
        let Some(f) = &self.forcing else {
            return Ok(None);
        };
        match (&f.u, f.amplitude) {
            (Some(_), Some(_)) => Err(Error::Validation(
                "forcing: give either 'u' or 'amplitude', not both".into(),
            )),
            (Some(u), None) => Ok(Some(u.clone())),
            (None, Some(amp)) => {
                let w = f.frequency.or(self.model.omega).ok_or_else(|| {
                    Error::Validation(
                        "forcing.frequency is required for first-order systems".into(),
                    )
                })?;
                Expr::parse(&format!("({amp:?})*cos(({w:?})*t)")).map(Some)
            }
            (None, None) => Ok(None),
        }
    }

    /// Closed loop described by the scenario.
    pub fn closed_loop(&self) -> Result<ClosedLoop> {
        let input = self.forcing_expr()?;
        let m = &self.model;
        let plant = match self.system {
            SystemKind::FirstOrder => {
                if m.omega.is_some() || m.lambda.is_some() {
                    return Err(Error::Validation(
                        "first_order model takes no omega or lambda".into(),
                    ));
                }
                Plant::FirstOrder(FirstOrderModel { mu0: m.mu0, input })
            }
            SystemKind::Oscillator | SystemKind::OscillatorFull => {
                let omega = m
                    .omega
                    .ok_or_else(|| Error::Validation("oscillator model needs omega".into()))?;
                let lambda = m.lambda.unwrap_or(0.0);
                if self.system == SystemKind::Oscillator && lambda != 0.0 {
                    return Err(Error::Validation(
                        "system 'oscillator' has lambda = 0; use 'oscillator_full' for cubic damping".into(),
                    ));
                }
                Plant::Oscillator(OscillatorModel {
                    mu0: m.mu0,
                    omega,
                    lambda,
                    input,
                })
            }
        };
        if !self.system.is_oscillator() && self.initial.xdot.is_some() {
            return Err(Error::Validation(
                "first_order initial state has no xdot".into(),
            ));
        }
        let mut system = ClosedLoop::new(plant, self.law.clone())?
            .with_perturbation(self.perturbation.clone())?;
        system.frozen_mu = m.frozen_mu.is_some();
        if let Some(a) = m.anchor {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Validation(format!("anchor must be > 0, got {a}")));
            }
            system.anchor_override = Some(a);
        }
        Ok(system)
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let mu = self.model.frozen_mu.unwrap_or(self.initial.mu);
        if self.system.is_oscillator() {
            vec![self.initial.x, self.initial.xdot.unwrap_or(0.0), mu]
        } else {
            vec![self.initial.x, mu]
        }
    }

    /// Hypothesis checks relevant to the scenario's system and law.
    pub fn hypotheses(&self) -> Result<HypothesisReport> {
        match (self.system.is_oscillator(), self.model.omega) {
            (true, Some(w)) => validate_oscillator_hypotheses(&self.law, self.model.mu0, w),
            _ => Ok(validate_convergence_hypotheses(
                &self.law,
                &[self.model.mu0],
            )),
        }
    }

    pub fn header(&self) -> &'static [&'static str] {
        if self.system.is_oscillator() {
            &["t", "x", "xdot", "mu"]
        } else {
            &["t", "x", "mu"]
        }
    }
}

/// Summary of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub system: SystemKind,
    pub law: String,
    pub seed: u64,
    pub mu0: f64,
    pub t0: f64,
    pub t_final: f64,
    pub final_state: Vec<f64>,
    pub final_mu_error: f64,
    pub settle_band: f64,
    /// First time after which `|mu - mu0|` stays within the band; `None` if unsettled.
    pub settle_time: Option<f64>,
    pub settled: bool,
    /// Tuned amplitude `x*` / `r*`, when defined.
    pub target_amplitude: Option<f64>,
    /// Amplitude at the final state (`x` or `r`).
    pub final_amplitude: f64,
    /// `[min, max]` amplitude over the last quarter of the run.
    pub amplitude_window: [f64; 2],
    /// Largest distance to the target in the `(q, p)` chart over the last quarter.
    pub residual: Option<f64>,
    pub samples: usize,
    pub stats: StepStats,
    pub hypotheses: HypothesisReport,
    pub files: Vec<String>,
}

/// A finished simulation: the trajectory plus its report.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub trajectory: Trajectory,
    pub report: RunReport,
    header: &'static [&'static str],
}

impl Run {
    pub fn header(&self) -> &'static [&'static str] {
        self.header
    }

    /// Trajectory CSV, 17 significant digits per value.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Validation(format!("csv: {e}"));
        w.write_record(self.header).map_err(io)?;
        for (t, y) in self.trajectory.iter() {
            let row = std::iter::once(t)
                .chain(y.iter().copied())
                .map(format_float);
            w.write_record(row).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Validation(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serialises")
    }
}

/// Fixed scientific format with 17 significant digits; round-trips exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn last_quarter(times: &[f64]) -> usize {
    let t_end = *times.last().expect("non-empty trajectory");
    let cut = times[0] + 0.75 * (t_end - times[0]);
    times.partition_point(|t| *t < cut)
}

/// First sample time after which `|mu - mu0| <= band` for the rest of the run.
pub fn settle_time(times: &[f64], mu: &[f64], mu0: f64, band: f64) -> Option<f64> {
    match mu.iter().rposition(|m| !((m - mu0).abs() <= band)) {
        None => times.first().copied(),
        Some(i) if i + 1 < times.len() => Some(times[i + 1]),
        Some(_) => None,
    }
}

/// Integrate the scenario and assemble its report.
pub fn simulate(scenario: &Scenario) -> Result<Run> {
    scenario.validate()?;
    let system = scenario.closed_loop()?;
    let cfg = scenario.integrator.config()?;
    let (t0, t1) = (scenario.time.t0, scenario.t1()?);
    let y0 = scenario.initial_state();
    let trajectory = match scenario.integrator.chart {
        ChartChoice::Original => integrate(&system, &y0, t0, t1, &cfg)?,
        ChartChoice::Log => {
            let tag = if system.is_oscillator() {
                ChartTag::QphiP
            } else {
                ChartTag::Log
            };
            let field = system.transformed(tag)?;
            let z0 = field.from_original(&y0)?;
            let tz = integrate(&field, &z0, t0, t1, &cfg)?;
            Trajectory {
                states: tz.states.iter().map(|z| field.to_original(z)).collect(),
                times: tz.times,
                stats: tz.stats,
            }
        }
    };
    let report = build_report(scenario, &system, &trajectory)?;
    Ok(Run {
        trajectory,
        report,
        header: scenario.header(),
    })
}

fn build_report(scenario: &Scenario, system: &ClosedLoop, traj: &Trajectory) -> Result<RunReport> {
    let mu0 = scenario.model.mu0;
    let mu_idx = system.state_dim() - 1;
    let mu: Vec<f64> = traj.component(mu_idx).collect();
    let final_state = traj.last_state().to_vec();
    let band = scenario.report.settle_band;
    let settle = settle_time(&traj.times, &mu, mu0, band);
    let start = last_quarter(&traj.times);
    let amps: Vec<f64> = traj.states[start..]
        .iter()
        .map(|y| system.amplitude(y))
        .collect();
    let window = [
        amps.iter().copied().fold(f64::INFINITY, f64::min),
        amps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ];
    let anchor = system.anchor().ok();
    let residual = anchor.map(|a| {
        let target = TargetSet {
            anchor: a,
            mu0,
            omega: system.omega(),
        };
        traj.states[start..]
            .iter()
            .map(|y| target.distance(y))
            .fold(0.0, f64::max)
    });
    Ok(RunReport {
        name: scenario.name.clone(),
        system: scenario.system,
        law: scenario.law.name().to_string(),
        seed: scenario.seed,
        mu0,
        t0: scenario.time.t0,
        t_final: traj.last_time(),
        final_mu_error: (final_state[mu_idx] - mu0).abs(),
        final_amplitude: system.amplitude(&final_state),
        final_state,
        settle_band: band,
        settle_time: settle,
        settled: settle.is_some(),
        target_amplitude: anchor,
        amplitude_window: window,
        residual,
        samples: traj.len(),
        stats: traj.stats,
        hypotheses: scenario.hypotheses()?,
        files: Vec::new(),
    })
}

/// Set a dotted key (e.g. `law.a`, `perturbation.epsilon`) to `value`. The key
/// must already exist; the value keeps the type of the existing entry.
pub fn with_parameter(scenario: &Scenario, path: &str, value: &str) -> Result<Scenario> {
    let mut doc = toml::Value::try_from(scenario)
        .map_err(|e| Error::Validation(format!("cannot serialise scenario: {e}")))?;
    let mut slot = &mut doc;
    for key in path.split('.') {
        slot = slot.get_mut(key).ok_or_else(|| {
            Error::Validation(format!("parameter '{path}' is not set in the scenario"))
        })?;
    }
    let parse_err =
        |kind: &str| Error::Validation(format!("'{value}' is not a valid {kind} for '{path}'"));
    *slot = match slot {
        toml::Value::Float(_) => {
            toml::Value::Float(value.trim().parse().map_err(|_| parse_err("number"))?)
        }
        toml::Value::Integer(_) => {
            toml::Value::Integer(value.trim().parse().map_err(|_| parse_err("integer"))?)
        }
        toml::Value::Boolean(_) => {
            toml::Value::Boolean(value.trim().parse().map_err(|_| parse_err("boolean"))?)
        }
        toml::Value::String(_) => toml::Value::String(value.trim().to_string()),
        _ => {
            return Err(Error::Validation(format!(
                "parameter '{path}' is a table or array"
            )))
        }
    };
    let updated: Scenario = doc.try_into().map_err(|e: toml::de::Error| {
        Error::Validation(format!("'{path}' = {value}: {}", e.message()))
    })?;
    updated.validate()?;
    Ok(updated)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEURAL: &str = r#"
name = "neural"
system = "first_order"
[model]
mu0 = 0.5
[law]
kind = "log"
a = 1.0
b = 1.0
[initial]
x = 2.0
mu = 0.0
[time]
horizon = 50.0
"#;

    #[test]
    fn parse_and_roundtrip() {
        let s = Scenario::from_toml(NEURAL).unwrap();
        assert_eq!(s.initial_state(), vec![2.0, 0.0]);
        assert_eq!(s.integrator, IntegratorSection::default());
        let back = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_input() {
        let err = Scenario::from_toml(&NEURAL.replace("x = 2.0", "x = 0.0")).unwrap_err();
        assert!(matches!(err, Error::DomainViolation { .. }));
        let err =
            Scenario::from_toml(&NEURAL.replace("horizon = 50.0", "horizon = -1.0")).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err = Scenario::from_toml(&NEURAL.replace("[time]", "bogus = 1\n[time]")).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let osc = NEURAL
            .replace("first_order", "oscillator")
            .replace("mu0 = 0.5", "mu0 = 0.5\nomega = 1.0\nlambda = 0.1");
        assert!(Scenario::from_toml(&osc).is_err());
        assert!(Scenario::from_toml(&osc.replace("\"oscillator\"", "\"oscillator_full\"")).is_ok());
    }

    #[test]
    fn default_oscillator_horizon() {
        let osc = NEURAL
            .replace("first_order", "oscillator")
            .replace("mu0 = 0.5", "mu0 = 0.5\nomega = 2.0")
            .replace("horizon = 50.0", "");
        let s = Scenario::from_toml(&osc).unwrap();
        assert!((s.horizon().unwrap() - 100.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn settle_time_cases() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(settle_time(&t, &[1.0, 0.5, 0.0, 0.0], 0.0, 0.1), Some(2.0));
        assert_eq!(settle_time(&t, &[0.0, 0.0, 0.0, 0.0], 0.0, 0.1), Some(0.0));
        assert_eq!(settle_time(&t, &[0.0, 0.0, 0.0, 1.0], 0.0, 0.1), None);
    }

    #[test]
    fn csv_format_roundtrips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 7.0e200, std::f64::consts::E] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
        let run = simulate(&Scenario::from_toml(NEURAL).unwrap()).unwrap();
        let csv = run.to_csv().unwrap();
        assert!(csv.starts_with(
            "t,x,mu\n0.0000000000000000e0,2.0000000000000000e0,0.0000000000000000e0\n"
        ));
        assert!(run.report.final_mu_error < 1e-6);
    }

    #[test]
    fn set_parameter() {
        let s = Scenario::from_toml(NEURAL).unwrap();
        let t = with_parameter(&s, "law.a", "0.5").unwrap();
        assert_eq!(t.law, AdaptationLaw::log(0.5, 1.0).unwrap());
        assert!(with_parameter(&s, "law.c", "1").is_err());
        assert!(with_parameter(&s, "perturbation.epsilon", "1").is_err());
        assert!(with_parameter(&s, "law.a", "abc").is_err());
        assert!(with_parameter(&s, "law.a", "-1").is_err());
        assert_eq!(with_parameter(&s, "seed", "9").unwrap().seed, 9);
    }

    #[test]
    fn log_chart_run_matches_original() {
        let s = Scenario::from_toml(NEURAL).unwrap();
        let mut c = s.clone();
        c.integrator.chart = ChartChoice::Log;
        let a = simulate(&s).unwrap();
        let b = simulate(&c).unwrap();
        let (ya, yb) = (a.trajectory.last_state(), b.trajectory.last_state());
        assert!((ya[0] - yb[0]).abs() < 1e-7 && (ya[1] - yb[1]).abs() < 1e-7);
    }
}
