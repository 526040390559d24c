//! Falsification searches for practical and semiglobal practical stability.
//!
//! The stability notions quantify over every small `eps` and every initial
//! condition, so a simulation can only refute them. A search either returns a
//! replayable counterexample ([`Outcome::Falsified`]) or reports the budget it
//! spent without finding one ([`Outcome::NotFalsified`]).
//!
//! Distances to the target set are measured in the `(q, p)` chart: for the
//! first-order loop `q = ln(x/x*)`, for the oscillator `q = ln(r/r*)` (the
//! phase is free on the orbit), and `p = mu - mu0` in both cases.

use std::f64::consts::TAU;
use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ChartPoint, ClosedLoop};
use crate::error::{Error, Result};
use crate::ode::{drive, IntegratorConfig, VectorField};

/// A closed loop whose perturbation amplitude `eps` is the family parameter.
///
/// The `eps` stored in the loop's perturbation is the largest value of the
/// family that is searched.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonFamily {
    system: ClosedLoop,
}

impl EpsilonFamily {
    /// Pins the chart anchor so repeated chart conversions do not re-solve for it.
    pub fn new(system: ClosedLoop) -> Result<Self> {
        let anchor = system.anchor()?;
        let mut system = system;
        system.anchor_override = Some(anchor);
        Ok(Self { system })
    }

    pub fn system(&self) -> &ClosedLoop {
        &self.system
    }

    pub fn max_epsilon(&self) -> f64 {
        self.system.perturbation.as_ref().map_or(0.0, |p| p.epsilon)
    }

    pub fn at(&self, epsilon: f64) -> ClosedLoop {
        self.system.with_epsilon(epsilon)
    }

    /// Period of the time dependence, if the perturbation is a plain sinusoid.
    pub fn period(&self) -> Option<f64> {
        self.system.perturbation.as_ref().and_then(|p| p.period())
    }

    pub fn domain(&self) -> &'static str {
        if self.system.is_oscillator() {
            "(x, xdot) != (0, 0)"
        } else {
            "x > 0"
        }
    }

    pub fn target(&self) -> TargetSet {
        TargetSet::of(&self.system)
    }
}

/// The equilibrium (first-order) or tuned periodic orbit (oscillator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub anchor: f64,
    pub mu0: f64,
    /// `Some(omega)` for the orbit of an oscillator.
    pub omega: Option<f64>,
}

impl TargetSet {
    /// The loop's anchor must be resolvable; [`EpsilonFamily::new`] ensures it.
    pub fn of(system: &ClosedLoop) -> Self {
        Self {
            anchor: system.anchor().expect("family anchor is pinned"),
            mu0: system.mu0(),
            omega: system.omega(),
        }
    }

    pub fn description(&self) -> String {
        match self.omega {
            None => format!("equilibrium x = {}, mu = {}", self.anchor, self.mu0),
            Some(w) => format!("orbit r = {}, mu = {}, omega = {w}", self.anchor, self.mu0),
        }
    }

    /// `(q, p)` of a state; `None` where the chart is undefined.
    pub fn chart_qp(&self, y: &[f64]) -> Option<(f64, f64)> {
        let (amp, mu) = match self.omega {
            None => (y[0], y[1]),
            Some(w) => (y[0].hypot(y[1] / w), y[2]),
        };
        (amp > 0.0 && amp.is_finite()).then(|| ((amp / self.anchor).ln(), mu - self.mu0))
    }

    /// `sqrt(q^2 + p^2)`; infinite outside the chart.
    pub fn distance(&self, y: &[f64]) -> f64 {
        self.chart_qp(y).map_or(f64::INFINITY, |(q, p)| q.hypot(p))
    }

    /// Original-coordinate state at chart position `(q, p)` and phase `phi`.
    pub fn state_at(&self, q: f64, p: f64, phi: f64) -> Vec<f64> {
        let amp = self.anchor * q.exp();
        let mu = self.mu0 + p;
        match self.omega {
            None => vec![amp, mu],
            Some(w) => vec![amp * phi.cos(), -amp * w * phi.sin(), mu],
        }
    }
}

/// Compact set of initial conditions for the semiglobal clauses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Compact {
    /// Ball of the given radius about the target in the `(q, p)` chart.
    ChartBall { radius: f64 },
    /// Axis-aligned box in original coordinates.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl Compact {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Compact::ChartBall { radius } if !(*radius > 0.0 && radius.is_finite()) => Err(
                Error::Validation(format!("compact radius must be > 0, got {radius}")),
            ),
            Compact::Box { lower, upper }
                if lower.len() != dim
                    || upper.len() != dim
                    || lower
                        .iter()
                        .zip(upper)
                        .any(|(l, u)| !(l <= u && l.is_finite() && u.is_finite())) =>
            {
                Err(Error::Validation(format!(
                    "compact box needs {dim} finite bounds with lower <= upper"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Search effort. Every field can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub points_per_shell: usize,
    /// Shell radii as fractions of the candidate `U1` radius.
    pub shell_fractions: Vec<f64>,
    /// Start times; `None` samples one perturbation period (or `{0, 1, 10, 100}`).
    pub start_times: Option<Vec<f64>>,
    /// Tested `eps` as multiples of the family's largest `eps`.
    pub epsilon_factors: Vec<f64>,
    pub horizon: f64,
    /// Candidate `U1` radii as fractions of the `U2` radius.
    pub u1_fractions: Vec<f64>,
    /// Samples per box axis (plus the same number of random points) for compacts.
    pub compact_samples: usize,
    /// `K2` radius as a multiple of the largest initial distance in `K`.
    pub bound_factor: f64,
    pub integrator: IntegratorConfig,
    pub seed: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            points_per_shell: 24,
            shell_fractions: vec![1.0 / 3.0, 2.0 / 3.0, 0.99],
            start_times: None,
            epsilon_factors: vec![1.0, 0.3, 0.1, 0.03],
            horizon: 500.0,
            u1_fractions: vec![0.25],
            compact_samples: 4,
            bound_factor: 10.0,
            integrator: IntegratorConfig::adaptive(1e-9, 1e-9),
            seed: 0,
        }
    }
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if self.points_per_shell == 0 || self.compact_samples == 0 {
            return Err(Error::Validation("budget sample counts must be > 0".into()));
        }
        if self.shell_fractions.is_empty() || !positive(&self.shell_fractions) {
            return Err(Error::Validation("shell fractions must be positive".into()));
        }
        if self.shell_fractions.iter().any(|f| *f >= 1.0) {
            return Err(Error::Validation(
                "shell fractions must be < 1 (shells lie inside U1)".into(),
            ));
        }
        if self.epsilon_factors.is_empty() || !positive(&self.epsilon_factors) {
            return Err(Error::Validation("epsilon factors must be positive".into()));
        }
        if self.u1_fractions.is_empty() || !positive(&self.u1_fractions) {
            return Err(Error::Validation("U1 fractions must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Validation(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        if !(self.bound_factor > 1.0) {
            return Err(Error::Validation("bound factor must be > 1".into()));
        }
        if let Some(ts) = &self.start_times {
            if ts.is_empty() || ts.iter().any(|t| !t.is_finite()) {
                return Err(Error::Validation(
                    "start times must be finite and non-empty".into(),
                ));
            }
        }
        self.integrator.validate()
    }

    /// Tested `eps` values, largest first.
    pub fn epsilons(&self, family: &EpsilonFamily) -> Vec<f64> {
        let max = family.max_epsilon();
        if max == 0.0 {
            return vec![0.0];
        }
        let mut eps: Vec<f64> = self.epsilon_factors.iter().map(|f| f * max).collect();
        eps.sort_by(|a, b| b.total_cmp(a));
        eps.dedup();
        eps
    }

    pub fn start_times(&self, family: &EpsilonFamily) -> Vec<f64> {
        if let Some(ts) = &self.start_times {
            return ts.clone();
        }
        match family.period() {
            Some(period) => (0..4).map(|k| k as f64 * period / 4.0).collect(),
            None => vec![0.0, 1.0, 10.0, 100.0],
        }
    }
}

/// Replay data for a counterexample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub initial_state: Vec<f64>,
    pub epsilon: f64,
    pub t0: f64,
    pub horizon: f64,
    /// Time at which the violation was observed.
    pub violation_time: f64,
    /// Distance to the target at that time.
    pub violation_distance: f64,
    /// Set when the integrator failed before the violation (counted as one).
    pub integration_error: Option<String>,
    /// `(t, state)` samples up to the violation, thinned to at most 200 points.
    pub excerpt: Vec<(f64, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    PracticalStability,
    SemiglobalBoundedness,
    Convergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSummary {
    pub epsilon: f64,
    pub trajectories: usize,
    pub violations: usize,
    pub max_distance: f64,
}

/// What a search covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub trajectories: usize,
    pub integration_failures: usize,
    pub per_epsilon: Vec<EpsilonSummary>,
    /// Budget exhausted without counterexample.
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Falsified { witness: Witness },
    NotFalsified { report: BudgetReport },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseVerdict {
    pub clause: Clause,
    pub outcome: Outcome,
    pub epsilons: Vec<f64>,
    /// Radius the trajectories had to stay inside (`U2`, `K2` or `U`).
    pub bound_radius: f64,
    /// Initial-condition radius (`U1` candidates) or compact description.
    pub initial_set: String,
    /// Candidate `U1` radii that had no violation at the smallest `eps`.
    pub surviving_u1: Vec<f64>,
    /// Entries of the `U2` ladder `{U2, U2/2, U2/4, U2/8}` never exceeded at the smallest `eps`.
    pub surviving_u2: Vec<f64>,
    /// Start of the convergence window, relative to `t0`.
    pub settle_time: Option<f64>,
}

impl ClauseVerdict {
    pub fn is_falsified(&self) -> bool {
        matches!(self.outcome, Outcome::Falsified { .. })
    }

    pub fn witness(&self) -> Option<&Witness> {
        match &self.outcome {
            Outcome::Falsified { witness } => Some(witness),
            Outcome::NotFalsified { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub target: String,
    pub horizon: f64,
    pub seed: u64,
    pub clauses: Vec<ClauseVerdict>,
}

impl Verdict {
    pub fn is_falsified(&self) -> bool {
        self.clauses.iter().any(ClauseVerdict::is_falsified)
    }

    pub fn clause(&self, clause: Clause) -> Option<&ClauseVerdict> {
        self.clauses.iter().find(|c| c.clause == clause)
    }

    pub fn witness(&self) -> Option<&Witness> {
        self.clauses.iter().find_map(ClauseVerdict::witness)
    }
}

// ---------------------------------------------------------------------------
// Trajectory checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum Check {
    /// Distance must stay `<= radius` throughout.
    StayWithin(f64),
    /// Distance must be `<= radius` for all `t >= t0 + settle`.
    EnterBy { radius: f64, settle: f64 },
}

#[derive(Debug, Clone)]
struct Job {
    y0: Vec<f64>,
    t0: f64,
    epsilon: f64,
    /// Index of the candidate U1 (practical clause) the start belongs to.
    group: usize,
}

#[derive(Debug, Clone)]
struct JobResult {
    max_distance: f64,
    violation: Option<(f64, f64)>,
    error: Option<Error>,
}

fn run_job(
    family: &EpsilonFamily,
    target: &TargetSet,
    job: &Job,
    check: Check,
    budget: &Budget,
) -> JobResult {
    let system = family.at(job.epsilon);
    let mut max_distance: f64 = 0.0;
    let mut violation = None;
    let outcome = drive(
        &system,
        &job.y0,
        job.t0,
        job.t0 + budget.horizon,
        &budget.integrator,
        |t, y| {
            let d = target.distance(y);
            let relevant = match check {
                Check::StayWithin(_) => true,
                Check::EnterBy { settle, .. } => t >= job.t0 + settle,
            };
            if relevant {
                max_distance = max_distance.max(d);
            }
            let radius = match check {
                Check::StayWithin(r) | Check::EnterBy { radius: r, .. } => r,
            };
            if relevant && !(d <= radius) {
                violation = Some((t, d));
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    );
    let error = outcome.err();
    if error.is_some() {
        max_distance = f64::INFINITY;
    }
    JobResult {
        max_distance,
        violation,
        error,
    }
}

/// Re-integrate a witness and return `(t, state)` samples up to its violation.
pub fn replay(
    family: &EpsilonFamily,
    witness: &Witness,
    integrator: &IntegratorConfig,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let system = family.at(witness.epsilon);
    let mut samples = Vec::new();
    let stop = witness.violation_time;
    drive(
        &system,
        &witness.initial_state,
        witness.t0,
        witness.t0 + witness.horizon,
        integrator,
        |t, y| {
            samples.push((t, y.to_vec()));
            if t >= stop {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    )?;
    Ok(samples)
}

/// True when replaying `witness` reproduces its violation.
pub fn witness_reproduces(
    family: &EpsilonFamily,
    witness: &Witness,
    integrator: &IntegratorConfig,
) -> bool {
    let target = family.target();
    match replay(family, witness, integrator) {
        Ok(samples) => samples.last().is_some_and(|(t, y)| {
            *t == witness.violation_time && target.distance(y) == witness.violation_distance
        }),
        Err(e) => witness.integration_error.as_deref() == Some(e.to_string().as_str()),
    }
}

fn thin(samples: Vec<(f64, Vec<f64>)>, max: usize) -> Vec<(f64, Vec<f64>)> {
    if samples.len() <= max {
        return samples;
    }
    let last = samples.len() - 1;
    (0..max)
        .map(|k| samples[k * last / (max - 1)].clone())
        .collect()
}

fn build_witness(
    family: &EpsilonFamily,
    job: &Job,
    result: &JobResult,
    budget: &Budget,
) -> Witness {
    let (violation_time, violation_distance) =
        result.violation.unwrap_or((f64::NAN, f64::INFINITY));
    let mut witness = Witness {
        initial_state: job.y0.clone(),
        epsilon: job.epsilon,
        t0: job.t0,
        horizon: budget.horizon,
        violation_time,
        violation_distance,
        integration_error: result.error.as_ref().map(|e| e.to_string()),
        excerpt: Vec::new(),
    };
    let samples = replay(family, &witness, &budget.integrator).unwrap_or_default();
    witness.excerpt = thin(samples, 200);
    witness
}

fn run_jobs(family: &EpsilonFamily, jobs: &[Job], check: Check, budget: &Budget) -> Vec<JobResult> {
    let target = family.target();
    // `collect` keeps job order, so the reduction below is order independent.
    jobs.par_iter()
        .map(|job| run_job(family, &target, job, check, budget))
        .collect()
}

fn summarize(epsilons: &[f64], jobs: &[Job], results: &[JobResult]) -> Vec<EpsilonSummary> {
    epsilons
        .iter()
        .map(|&eps| {
            let idx: Vec<usize> = (0..jobs.len())
                .filter(|&i| jobs[i].epsilon == eps)
                .collect();
            EpsilonSummary {
                epsilon: eps,
                trajectories: idx.len(),
                violations: idx.iter().filter(|&&i| is_violation(&results[i])).count(),
                max_distance: idx
                    .iter()
                    .map(|&i| results[i].max_distance)
                    .fold(0.0, f64::max),
            }
        })
        .collect()
}

fn is_violation(r: &JobResult) -> bool {
    r.violation.is_some() || r.error.is_some()
}

fn report(epsilons: &[f64], jobs: &[Job], results: &[JobResult]) -> BudgetReport {
    BudgetReport {
        trajectories: jobs.len(),
        integration_failures: results.iter().filter(|r| r.error.is_some()).count(),
        per_epsilon: summarize(epsilons, jobs, results),
        exhausted: true,
    }
}

// ---------------------------------------------------------------------------
// Searches
// ---------------------------------------------------------------------------

fn shell_starts(
    family: &EpsilonFamily,
    radius: f64,
    budget: &Budget,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let target = family.target();
    let n = budget.points_per_shell;
    let mut out = Vec::with_capacity(n * budget.shell_fractions.len());
    for &frac in &budget.shell_fractions {
        let rho = frac * radius;
        let jitter: f64 = rng.random_range(0.0..TAU / n as f64);
        for k in 0..n {
            let theta = jitter + TAU * k as f64 / n as f64;
            let phi = rng.random_range(0.0..TAU);
            out.push(target.state_at(rho * theta.cos(), rho * theta.sin(), phi));
        }
    }
    out
}

/// Practical-stability search: trajectories starting within a candidate `U1`
/// must stay inside the `U2` ball. Falsified iff, at the smallest tested
/// `eps`, every candidate `U1` has a start that leaves `U2`.
pub fn falsify_practical_stability(
    family: &EpsilonFamily,
    u2_radius: f64,
    budget: &Budget,
) -> Result<Verdict> {
    let clause = practical_clause(family, u2_radius, budget)?;
    Ok(Verdict {
        target: family.target().description(),
        horizon: budget.horizon,
        seed: budget.seed,
        clauses: vec![clause],
    })
}

fn practical_clause(
    family: &EpsilonFamily,
    u2_radius: f64,
    budget: &Budget,
) -> Result<ClauseVerdict> {
    if !(u2_radius > 0.0 && u2_radius.is_finite()) {
        return Err(Error::Validation(format!(
            "U2 radius must be > 0, got {u2_radius}"
        )));
    }
    budget.validate()?;
    let epsilons = budget.epsilons(family);
    let start_times = budget.start_times(family);
    let u1_radii: Vec<f64> = budget.u1_fractions.iter().map(|f| f * u2_radius).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut jobs = Vec::new();
    for (group, &u1) in u1_radii.iter().enumerate() {
        let starts = shell_starts(family, u1, budget, &mut rng);
        for &eps in &epsilons {
            for &t0 in &start_times {
                jobs.extend(starts.iter().map(|y0| Job {
                    y0: y0.clone(),
                    t0,
                    epsilon: eps,
                    group,
                }));
            }
        }
    }
    let results = run_jobs(family, &jobs, Check::StayWithin(u2_radius), budget);

    let smallest = *epsilons.last().expect("non-empty ladder");
    let at_smallest = |i: &usize| jobs[*i].epsilon == smallest;
    let surviving_u1: Vec<f64> = u1_radii
        .iter()
        .enumerate()
        .filter(|(g, _)| {
            !(0..jobs.len())
                .filter(at_smallest)
                .any(|i| jobs[i].group == *g && is_violation(&results[i]))
        })
        .map(|(_, r)| *r)
        .collect();
    let max_small = (0..jobs.len())
        .filter(at_smallest)
        .map(|i| results[i].max_distance)
        .fold(0.0, f64::max);
    let surviving_u2 = (0..4)
        .map(|k| u2_radius / f64::powi(2.0, k))
        .filter(|r| max_small <= *r)
        .collect();

    let outcome = if surviving_u1.is_empty() {
        let i = (0..jobs.len())
            .find(|i| at_smallest(i) && is_violation(&results[*i]))
            .expect("every U1 candidate has a violation");
        Outcome::Falsified {
            witness: build_witness(family, &jobs[i], &results[i], budget),
        }
    } else {
        Outcome::NotFalsified {
            report: report(&epsilons, &jobs, &results),
        }
    };
    Ok(ClauseVerdict {
        clause: Clause::PracticalStability,
        outcome,
        epsilons,
        bound_radius: u2_radius,
        initial_set: format!("U1 radii {u1_radii:?}"),
        surviving_u1,
        surviving_u2,
        settle_time: None,
    })
}

fn compact_starts(
    family: &EpsilonFamily,
    k: &Compact,
    budget: &Budget,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let target = family.target();
    let n = budget.compact_samples;
    match k {
        Compact::ChartBall { radius } => {
            let mut out = shell_starts(family, *radius, budget, rng);
            out.push(target.state_at(0.0, 0.0, 0.0));
            out
        }
        Compact::Box { lower, upper } => {
            let dim = lower.len();
            let axis = |d: usize, i: usize| {
                if n == 1 {
                    0.5 * (lower[d] + upper[d])
                } else {
                    lower[d] + (upper[d] - lower[d]) * i as f64 / (n - 1) as f64
                }
            };
            let mut out = Vec::new();
            let total = n.pow(dim as u32);
            for idx in 0..total {
                let mut rest = idx;
                let y: Vec<f64> = (0..dim)
                    .map(|d| {
                        let i = rest % n;
                        rest /= n;
                        axis(d, i)
                    })
                    .collect();
                out.push(y);
            }
            for _ in 0..total {
                out.push(
                    (0..dim)
                        .map(|d| rng.random_range(lower[d]..=upper[d]))
                        .collect(),
                );
            }
            // Points outside the state domain (e.g. the oscillator origin) are skipped.
            out.retain(|y| family.system().admissible(y));
            out
        }
    }
}

/// Semiglobal practical stability search: the practical clause with `U2 = U`,
/// boundedness of trajectories from `K` inside a ball `K2`, and convergence
/// from `K` into `U` within half the horizon.
pub fn falsify_semiglobal_practical(
    family: &EpsilonFamily,
    k: &Compact,
    u_radius: f64,
    budget: &Budget,
) -> Result<Verdict> {
    if !(u_radius > 0.0 && u_radius.is_finite()) {
        return Err(Error::Validation(format!(
            "U radius must be > 0, got {u_radius}"
        )));
    }
    k.validate(family.system().state_dim())?;
    if let Compact::ChartBall { radius } = k {
        if *radius <= u_radius {
            return Err(Error::Validation(format!(
                "compact radius {radius} must exceed U radius {u_radius}"
            )));
        }
    }
    budget.validate()?;
    let practical = practical_clause(family, u_radius, budget)?;

    let target = family.target();
    let epsilons = budget.epsilons(family);
    let start_times = budget.start_times(family);
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed ^ 0x9e37_79b9_7f4a_7c15);
    let starts = compact_starts(family, k, budget, &mut rng);
    if starts.is_empty() {
        return Err(Error::Validation(
            "compact set contains no admissible state".into(),
        ));
    }
    let k_extent = starts
        .iter()
        .map(|y| target.distance(y))
        .fold(0.0, f64::max);
    let k2_radius = budget.bound_factor * k_extent.max(u_radius);
    let jobs: Vec<Job> = epsilons
        .iter()
        .flat_map(|&eps| {
            let starts = &starts;
            start_times.iter().flat_map(move |&t0| {
                starts.iter().map(move |y0| Job {
                    y0: y0.clone(),
                    t0,
                    epsilon: eps,
                    group: 0,
                })
            })
        })
        .collect();
    let k_desc = match k {
        Compact::ChartBall { radius } => format!("(q, p) ball of radius {radius}"),
        Compact::Box { lower, upper } => format!("box {lower:?} .. {upper:?}"),
    };

    let bounded = {
        let results = run_jobs(family, &jobs, Check::StayWithin(k2_radius), budget);
        clause_from(
            family,
            Clause::SemiglobalBoundedness,
            &epsilons,
            &jobs,
            &results,
            budget,
            k2_radius,
            &k_desc,
            None,
        )
    };
    let settle = 0.5 * budget.horizon;
    let smallest = *epsilons.last().expect("non-empty ladder");
    let conv_jobs: Vec<Job> = jobs
        .iter()
        .filter(|j| j.epsilon == smallest)
        .cloned()
        .collect();
    let converged = {
        let check = Check::EnterBy {
            radius: u_radius,
            settle,
        };
        let results = run_jobs(family, &conv_jobs, check, budget);
        clause_from(
            family,
            Clause::Convergence,
            &[smallest],
            &conv_jobs,
            &results,
            budget,
            u_radius,
            &k_desc,
            Some(settle),
        )
    };
    Ok(Verdict {
        target: target.description(),
        horizon: budget.horizon,
        seed: budget.seed,
        clauses: vec![practical, bounded, converged],
    })
}

/// Clause falsified iff a violation occurs at the smallest tested `eps`.
#[allow(clippy::too_many_arguments)]
fn clause_from(
    family: &EpsilonFamily,
    clause: Clause,
    epsilons: &[f64],
    jobs: &[Job],
    results: &[JobResult],
    budget: &Budget,
    bound_radius: f64,
    initial_set: &str,
    settle_time: Option<f64>,
) -> ClauseVerdict {
    let smallest = *epsilons.last().expect("non-empty ladder");
    let hit = (0..jobs.len()).find(|&i| jobs[i].epsilon == smallest && is_violation(&results[i]));
    let outcome = match hit {
        Some(i) => Outcome::Falsified {
            witness: build_witness(family, &jobs[i], &results[i], budget),
        },
        None => Outcome::NotFalsified {
            report: report(epsilons, jobs, results),
        },
    };
    ClauseVerdict {
        clause,
        outcome,
        epsilons: epsilons.to_vec(),
        bound_radius,
        initial_set: initial_set.to_string(),
        surviving_u1: Vec::new(),
        surviving_u2: Vec::new(),
        settle_time,
    }
}

// ---------------------------------------------------------------------------
// Residual sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub epsilon: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSweep {
    pub points: Vec<ResidualPoint>,
    /// `max residual / eps` over the positive `eps`.
    pub fitted_constant: Option<f64>,
    pub horizon: f64,
    pub start: Vec<f64>,
}

impl ResidualSweep {
    pub fn strictly_decreasing(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].residual < w[0].residual)
    }
}

pub const DEFAULT_SWEEP_HORIZON: f64 = 200.0;
/// Start of every sweep run: `(q, p) = (0.1, 0)`, phase 0.
pub const SWEEP_START_OFFSET: f64 = 0.1;

/// Long-run distance to the target for each `eps`: the sup of the distance
/// over the last quarter of `[0, horizon]`, from a fixed start near the target.
pub fn epsilon_residual_sweep(
    family: &EpsilonFamily,
    epsilons: &[f64],
    horizon: f64,
    integrator: &IntegratorConfig,
) -> Result<ResidualSweep> {
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(Error::Validation(
            "epsilons must be a non-empty list of values >= 0".into(),
        ));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Validation(format!(
            "horizon must be > 0, got {horizon}"
        )));
    }
    let target = family.target();
    let start = target.state_at(SWEEP_START_OFFSET, 0.0, 0.0);
    let window = 0.75 * horizon;
    let points = epsilons
        .par_iter()
        .map(|&eps| {
            let system = family.at(eps);
            let mut residual: f64 = 0.0;
            drive(&system, &start, 0.0, horizon, integrator, |t, y| {
                if t >= window {
                    residual = residual.max(target.distance(y));
                }
                ControlFlow::Continue(())
            })?;
            Ok(ResidualPoint {
                epsilon: eps,
                residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fitted_constant = points
        .iter()
        .filter(|p| p.epsilon > 0.0)
        .map(|p| p.residual / p.epsilon)
        .reduce(f64::max);
    Ok(ResidualSweep {
        points,
        fitted_constant,
        horizon,
        start,
    })
}

/// Chart point of the sweep start, for reporting.
pub fn sweep_start_point(family: &EpsilonFamily) -> ChartPoint {
    if family.system().is_oscillator() {
        ChartPoint::QphiP {
            q: SWEEP_START_OFFSET,
            phi: 0.0,
            p: 0.0,
        }
    } else {
        ChartPoint::Log {
            q: SWEEP_START_OFFSET,
            p: 0.0,
        }
    }
}
