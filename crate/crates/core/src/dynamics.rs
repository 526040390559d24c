//! Right-hand sides of the tuned systems and the coordinate charts used to
//! analyse them.
//!
//! Two plant families are covered:
//!
//! - the first-order system `x' = (mu - mu0) x + u(t)`, state `(x, mu)`;
//! - the oscillator `x'' + (mu0 - mu) x' + lambda x'^3 + omega^2 x = u(t)`,
//!   state `(x, xdot, mu)`; `lambda = 0` gives the reduced model.
//!
//! Either can carry a small perturbation `eps * p(state, mu, t)` and is closed
//! by an [`AdaptationLaw`]. A [`ClosedLoop`] is a [`VectorField`] in original
//! coordinates; [`ClosedLoop::transformed`] gives the same field expressed in
//! one of the analysis charts:
//!
//! | chart    | coordinates   | definition                                       |
//! |----------|---------------|--------------------------------------------------|
//! | `log`    | `(q, p)`      | `q = ln x - ln x*`, `p = mu - mu0`               |
//! | `polar`  | `(r, phi, mu)`| `x = r cos phi`, `xdot = -r omega sin phi`       |
//! | `qphi_p` | `(q, phi, p)` | polar, then `q = ln r - ln r*`, `p = mu - mu0`   |
//!
//! `x*` / `r*` always come from [`equilibrium_point`].

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::adaptation::{equilibrium_point, AdaptationLaw};
use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::ode::VectorField;

/// Bounded perturbation `eps * p(x, xdot, mu, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub epsilon: f64,
    pub p: Expr,
}

impl Perturbation {
    pub fn new(epsilon: f64, p: &str) -> Result<Self> {
        let pert = Self {
            epsilon,
            p: Expr::parse(p)?,
        };
        pert.validate()?;
        Ok(pert)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Validation(format!(
                "perturbation epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if self.p.uses(Var::R) {
            return Err(Error::Validation("perturbation may not reference r".into()));
        }
        if !self.p.is_bounded_in_time() {
            return Err(Error::Validation(format!(
                "perturbation {} is not bounded in t (t must appear only inside sin, cos, tanh, sigmoid)",
                self.p
            )));
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            p: self.p.clone(),
        }
    }

    /// True when `p` depends on time only through `sin`/`cos` of `t` with a
    /// common period; returns that period.
    pub fn period(&self) -> Option<f64> {
        if !self.p.uses(Var::T) {
            return None;
        }
        // Only the canonical sinusoid forms are recognised.
        let src = self.p.source().replace(' ', "");
        for prefix in ["sin(", "cos("] {
            if let Some(rest) = src.strip_prefix(prefix) {
                if rest == "t)" {
                    return Some(TAU);
                }
                if let Some(k) = rest.strip_suffix("*t)").and_then(|k| k.parse::<f64>().ok()) {
                    if k > 0.0 {
                        return Some(TAU / k);
                    }
                }
            }
        }
        None
    }
}

fn validate_input(input: &Option<Expr>) -> Result<()> {
    if let Some(u) = input {
        for var in [Var::X, Var::Xdot, Var::Mu, Var::R] {
            if u.uses(var) {
                return Err(Error::Validation(format!(
                    "input u(t) may only depend on t: {u}"
                )));
            }
        }
        if !u.is_bounded_in_time() {
            return Err(Error::Validation(format!("input {u} is not bounded in t")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderModel {
    pub mu0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Expr>,
}

impl FirstOrderModel {
    pub fn new(mu0: f64) -> Self {
        Self { mu0, input: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu0.is_finite() {
            return Err(Error::Validation("mu0 must be finite".into()));
        }
        validate_input(&self.input)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorModel {
    pub mu0: f64,
    pub omega: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Expr>,
}

impl OscillatorModel {
    pub fn new(mu0: f64, omega: f64) -> Self {
        Self {
            mu0,
            omega,
            lambda: 0.0,
            input: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu0.is_finite() {
            return Err(Error::Validation("mu0 must be finite".into()));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::Validation(format!(
                "omega must be > 0, got {}",
                self.omega
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Validation(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        validate_input(&self.input)
    }
}

fn input_at(input: &Option<Expr>, t: f64) -> f64 {
    input.as_ref().map_or(0.0, |u| u.eval_in(Var::T, t))
}

fn perturbation_at(pert: Option<&Perturbation>, env: &Env) -> f64 {
    match pert {
        Some(p) if p.epsilon != 0.0 => p.epsilon * p.p.eval(env),
        _ => 0.0,
    }
}

/// `x' = (mu - mu0) x + u(t) [+ eps p]` on `x > 0`.
pub fn first_order_rhs(
    model: &FirstOrderModel,
    x: f64,
    mu: f64,
    t: f64,
    perturbation: Option<&Perturbation>,
) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DomainViolation {
            t,
            reason: format!("first-order state requires x > 0, got {x}"),
        });
    }
    Ok(first_order_rhs_unchecked(model, x, mu, t, perturbation))
}

fn first_order_rhs_unchecked(
    model: &FirstOrderModel,
    x: f64,
    mu: f64,
    t: f64,
    perturbation: Option<&Perturbation>,
) -> f64 {
    let mut v = (mu - model.mu0) * x + input_at(&model.input, t);
    if perturbation.is_some_and(|p| p.epsilon != 0.0) {
        v += perturbation_at(
            perturbation,
            &Env {
                t,
                x,
                mu,
                ..Env::default()
            },
        );
    }
    v
}

/// `(xdot, -(mu0 - mu) xdot - lambda xdot^3 - omega^2 x + u [+ eps p])`.
pub fn oscillator_rhs(
    model: &OscillatorModel,
    x: f64,
    xdot: f64,
    mu: f64,
    t: f64,
    perturbation: Option<&Perturbation>,
) -> (f64, f64) {
    (xdot, oscillator_accel(model, x, xdot, mu, t, perturbation))
}

fn oscillator_accel(
    model: &OscillatorModel,
    x: f64,
    xdot: f64,
    mu: f64,
    t: f64,
    perturbation: Option<&Perturbation>,
) -> f64 {
    -model.omega * model.omega * x + oscillator_excess(model, x, xdot, mu, t, perturbation)
}

/// Everything in the acceleration except the harmonic restoring force.
fn oscillator_excess(
    model: &OscillatorModel,
    x: f64,
    xdot: f64,
    mu: f64,
    t: f64,
    perturbation: Option<&Perturbation>,
) -> f64 {
    let mut g = (mu - model.mu0) * xdot + input_at(&model.input, t);
    if model.lambda != 0.0 {
        g -= model.lambda * xdot * xdot * xdot;
    }
    if perturbation.is_some_and(|p| p.epsilon != 0.0) {
        g += perturbation_at(
            perturbation,
            &Env {
                t,
                x,
                xdot,
                mu,
                r: 0.0,
            },
        );
    }
    g
}

/// `q = ln x - ln x_star`.
pub fn log_chart(x: f64, x_star: f64) -> Result<f64> {
    if !(x > 0.0 && x_star > 0.0) {
        return Err(Error::DomainViolation {
            t: f64::NAN,
            reason: format!("log chart needs positive arguments, got x = {x}, x* = {x_star}"),
        });
    }
    Ok(x.ln() - x_star.ln())
}

pub fn log_chart_inverse(q: f64, x_star: f64) -> f64 {
    x_star * q.exp()
}

pub fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// `(r, phi)` with `x = r cos phi`, `xdot = -r omega sin phi`, `phi` in `[0, 2pi)`.
pub fn polar_chart(x: f64, xdot: f64, omega: f64) -> Result<(f64, f64)> {
    if x == 0.0 && xdot == 0.0 {
        return Err(Error::DomainViolation {
            t: f64::NAN,
            reason: "polar chart undefined at the origin".into(),
        });
    }
    let y = -xdot / omega;
    Ok((x.hypot(y), wrap_angle(y.atan2(x))))
}

pub fn polar_chart_inverse(r: f64, phi: f64, omega: f64) -> (f64, f64) {
    (r * phi.cos(), -r * omega * phi.sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartTag {
    Original,
    Log,
    Polar,
    QphiP,
}

impl ChartTag {
    pub fn name(self) -> &'static str {
        match self {
            ChartTag::Original => "original",
            ChartTag::Log => "log",
            ChartTag::Polar => "polar",
            ChartTag::QphiP => "qphi_p",
        }
    }
}

/// A state expressed in one chart. Angles are wrapped to `[0, 2pi)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ChartPoint {
    Original(Vec<f64>),
    Log { q: f64, p: f64 },
    Polar { r: f64, phi: f64, mu: f64 },
    QphiP { q: f64, phi: f64, p: f64 },
}

impl ChartPoint {
    pub fn tag(&self) -> ChartTag {
        match self {
            ChartPoint::Original(_) => ChartTag::Original,
            ChartPoint::Log { .. } => ChartTag::Log,
            ChartPoint::Polar { .. } => ChartTag::Polar,
            ChartPoint::QphiP { .. } => ChartTag::QphiP,
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        match self {
            ChartPoint::Original(v) => v.clone(),
            ChartPoint::Log { q, p } => vec![*q, *p],
            ChartPoint::Polar { r, phi, mu } => vec![*r, *phi, *mu],
            ChartPoint::QphiP { q, phi, p } => vec![*q, *phi, *p],
        }
    }

    fn from_coords(tag: ChartTag, c: &[f64]) -> Self {
        match tag {
            ChartTag::Original => ChartPoint::Original(c.to_vec()),
            ChartTag::Log => ChartPoint::Log { q: c[0], p: c[1] },
            ChartTag::Polar => ChartPoint::Polar {
                r: c[0],
                phi: wrap_angle(c[1]),
                mu: c[2],
            },
            ChartTag::QphiP => ChartPoint::QphiP {
                q: c[0],
                phi: wrap_angle(c[1]),
                p: c[2],
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum Plant {
    FirstOrder(FirstOrderModel),
    Oscillator(OscillatorModel),
}

impl Plant {
    pub fn mu0(&self) -> f64 {
        match self {
            Plant::FirstOrder(m) => m.mu0,
            Plant::Oscillator(m) => m.mu0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Plant::FirstOrder(m) => m.validate(),
            Plant::Oscillator(m) => m.validate(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Plant::FirstOrder(_) => "first-order",
            Plant::Oscillator(_) => "oscillator",
        }
    }
}

/// Plant closed by an adaptation law.
///
/// State layout: `(x, mu)` for first-order plants, `(x, xdot, mu)` for
/// oscillators.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub plant: Plant,
    pub law: AdaptationLaw,
    pub perturbation: Option<Perturbation>,
    /// Hold `mu` constant (open-loop control runs).
    pub frozen_mu: bool,
    /// Override for the chart anchor `x*`/`r*` (needed when `f` has several roots).
    pub anchor_override: Option<f64>,
}

impl ClosedLoop {
    pub fn new(plant: Plant, law: AdaptationLaw) -> Result<Self> {
        plant.validate()?;
        law.validate()?;
        Ok(Self {
            plant,
            law,
            perturbation: None,
            frozen_mu: false,
            anchor_override: None,
        })
    }

    pub fn first_order(mu0: f64, law: AdaptationLaw) -> Result<Self> {
        Self::new(Plant::FirstOrder(FirstOrderModel::new(mu0)), law)
    }

    pub fn oscillator(mu0: f64, omega: f64, law: AdaptationLaw) -> Result<Self> {
        Self::new(Plant::Oscillator(OscillatorModel::new(mu0, omega)), law)
    }

    pub fn with_perturbation(mut self, perturbation: Option<Perturbation>) -> Result<Self> {
        if let Some(p) = &perturbation {
            p.validate()?;
        }
        self.perturbation = perturbation;
        Ok(self)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut out = self.clone();
        out.perturbation = self.perturbation.as_ref().map(|p| p.with_epsilon(epsilon));
        out
    }

    pub fn mu0(&self) -> f64 {
        self.plant.mu0()
    }

    pub fn omega(&self) -> Option<f64> {
        match &self.plant {
            Plant::Oscillator(m) => Some(m.omega),
            Plant::FirstOrder(_) => None,
        }
    }

    pub fn is_oscillator(&self) -> bool {
        matches!(self.plant, Plant::Oscillator(_))
    }

    pub fn state_dim(&self) -> usize {
        match self.plant {
            Plant::FirstOrder(_) => 2,
            Plant::Oscillator(_) => 3,
        }
    }

    /// `x*` (first-order) or `r*` (oscillator).
    pub fn anchor(&self) -> Result<f64> {
        match self.anchor_override {
            Some(a) => Ok(a),
            None => equilibrium_point(&self.law, self.mu0()),
        }
    }

    /// Amplitude fed to the adaptation law.
    pub fn amplitude(&self, y: &[f64]) -> f64 {
        match &self.plant {
            Plant::FirstOrder(_) => y[0],
            Plant::Oscillator(m) => y[0].hypot(y[1] / m.omega),
        }
    }

    pub fn check_state(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.state_dim() {
            return Err(Error::Validation(format!(
                "state has dimension {}, expected {}",
                y.len(),
                self.state_dim()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: f64::NAN });
        }
        if !self.admissible(y) {
            return Err(Error::DomainViolation {
                t: f64::NAN,
                reason: format!("state {y:?} outside {}", self.domain()),
            });
        }
        Ok(())
    }

    fn mu_rate(&self, amplitude: f64, mu: f64) -> f64 {
        if self.frozen_mu {
            0.0
        } else {
            self.law.f(amplitude) - self.law.g(mu)
        }
    }

    /// Equilibrium / periodic-orbit state the loop is tuned to, in original
    /// coordinates (oscillator: the orbit point with `phi = 0`).
    pub fn target_state(&self) -> Result<Vec<f64>> {
        let anchor = self.anchor()?;
        Ok(match &self.plant {
            Plant::FirstOrder(m) => vec![anchor, m.mu0],
            Plant::Oscillator(m) => vec![anchor, 0.0, m.mu0],
        })
    }

    fn chart_admissible(&self, chart: ChartTag) -> Result<()> {
        let ok = matches!(
            (&self.plant, chart),
            (_, ChartTag::Original)
                | (Plant::FirstOrder(_), ChartTag::Log)
                | (Plant::Oscillator(_), ChartTag::Polar | ChartTag::QphiP)
        );
        if ok {
            Ok(())
        } else {
            Err(Error::ChartMismatch {
                chart: chart.name().into(),
                system: self.plant.kind().into(),
            })
        }
    }

    /// Express an original-coordinate state in `chart`.
    pub fn to_chart(&self, y: &[f64], chart: ChartTag) -> Result<ChartPoint> {
        self.chart_admissible(chart)?;
        let c = self.to_chart_unwrapped(y, chart, self.anchor_for(chart)?)?;
        Ok(ChartPoint::from_coords(chart, &c))
    }

    /// Map a chart point back to original coordinates.
    pub fn from_chart(&self, point: &ChartPoint) -> Result<Vec<f64>> {
        let chart = point.tag();
        self.chart_admissible(chart)?;
        Ok(self.chart_to_original(&point.coords(), chart, self.anchor_for(chart)?))
    }

    fn anchor_for(&self, chart: ChartTag) -> Result<f64> {
        match chart {
            ChartTag::Log | ChartTag::QphiP => self.anchor(),
            _ => Ok(f64::NAN),
        }
    }

    fn to_chart_unwrapped(&self, y: &[f64], chart: ChartTag, anchor: f64) -> Result<Vec<f64>> {
        let mu0 = self.mu0();
        Ok(match (&self.plant, chart) {
            (_, ChartTag::Original) => y.to_vec(),
            (Plant::FirstOrder(_), ChartTag::Log) => vec![log_chart(y[0], anchor)?, y[1] - mu0],
            (Plant::Oscillator(m), ChartTag::Polar) => {
                let (r, phi) = polar_chart(y[0], y[1], m.omega)?;
                vec![r, phi, y[2]]
            }
            (Plant::Oscillator(m), ChartTag::QphiP) => {
                let (r, phi) = polar_chart(y[0], y[1], m.omega)?;
                vec![log_chart(r, anchor)?, phi, y[2] - mu0]
            }
            _ => unreachable!("chart admissibility checked by caller"),
        })
    }

    fn chart_to_original(&self, c: &[f64], chart: ChartTag, anchor: f64) -> Vec<f64> {
        let mu0 = self.mu0();
        match (&self.plant, chart) {
            (_, ChartTag::Original) => c.to_vec(),
            (Plant::FirstOrder(_), ChartTag::Log) => {
                vec![log_chart_inverse(c[0], anchor), c[1] + mu0]
            }
            (Plant::Oscillator(m), ChartTag::Polar) => {
                let (x, xd) = polar_chart_inverse(c[0], c[1], m.omega);
                vec![x, xd, c[2]]
            }
            (Plant::Oscillator(m), ChartTag::QphiP) => {
                let (x, xd) = polar_chart_inverse(log_chart_inverse(c[0], anchor), c[1], m.omega);
                vec![x, xd, c[2] + mu0]
            }
            _ => unreachable!("chart admissibility checked by caller"),
        }
    }

    /// Analytic derivative of the chart map at `y`, row-major.
    pub fn chart_jacobian(&self, y: &[f64], chart: ChartTag) -> Result<Vec<f64>> {
        self.chart_admissible(chart)?;
        Ok(match (&self.plant, chart) {
            (_, ChartTag::Original) => {
                let n = y.len();
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    m[i * n + i] = 1.0;
                }
                m
            }
            (Plant::FirstOrder(_), ChartTag::Log) => vec![1.0 / y[0], 0.0, 0.0, 1.0],
            (Plant::Oscillator(m), ChartTag::Polar | ChartTag::QphiP) => {
                let (x, xd, w) = (y[0], y[1], m.omega);
                let r2 = x * x + xd * xd / (w * w);
                let r = r2.sqrt();
                let dphi = [xd / (w * r2), -x / (w * r2)];
                let first = if chart == ChartTag::Polar {
                    [x / r, xd / (w * w * r)]
                } else {
                    [x / r2, xd / (w * w * r2)]
                };
                vec![
                    first[0], first[1], 0.0, dphi[0], dphi[1], 0.0, 0.0, 0.0, 1.0,
                ]
            }
            _ => unreachable!(),
        })
    }

    /// The closed loop expressed in `chart` coordinates.
    pub fn transformed(&self, chart: ChartTag) -> Result<ChartField<'_>> {
        self.chart_admissible(chart)?;
        Ok(ChartField {
            inner: self,
            chart,
            anchor: self.anchor_for(chart)?,
        })
    }

    fn eval_original(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        match &self.plant {
            Plant::FirstOrder(m) => {
                let (x, mu) = (y[0], y[1]);
                dy[0] = first_order_rhs_unchecked(m, x, mu, t, self.perturbation.as_ref());
                dy[1] = self.mu_rate(x, mu);
            }
            Plant::Oscillator(m) => {
                let (x, xd, mu) = (y[0], y[1], y[2]);
                let (v, a) = oscillator_rhs(m, x, xd, mu, t, self.perturbation.as_ref());
                dy[0] = v;
                dy[1] = a;
                dy[2] = self.mu_rate(x.hypot(xd / m.omega), mu);
            }
        }
    }
}

impl VectorField for ClosedLoop {
    fn dim(&self) -> usize {
        self.state_dim()
    }

    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        self.eval_original(t, y, dydt)
    }

    fn admissible(&self, y: &[f64]) -> bool {
        match self.plant {
            Plant::FirstOrder(_) => y[0] > 0.0,
            Plant::Oscillator(_) => !(y[0] == 0.0 && y[1] == 0.0),
        }
    }

    fn domain(&self) -> &str {
        match self.plant {
            Plant::FirstOrder(_) => "{x > 0}",
            Plant::Oscillator(_) => "{(x, xdot) != (0, 0)}",
        }
    }
}

/// A [`ClosedLoop`] written in chart coordinates. The angle is kept unwrapped
/// during integration; wrap with [`wrap_angle`] when sampling.
#[derive(Debug, Clone, Copy)]
pub struct ChartField<'a> {
    inner: &'a ClosedLoop,
    chart: ChartTag,
    anchor: f64,
}

impl ChartField<'_> {
    pub fn chart(&self) -> ChartTag {
        self.chart
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn closed_loop(&self) -> &ClosedLoop {
        self.inner
    }

    /// Chart coordinates (unwrapped angle) to original state.
    pub fn to_original(&self, z: &[f64]) -> Vec<f64> {
        self.inner.chart_to_original(z, self.chart, self.anchor)
    }

    /// Original state to chart coordinates; angles land in `[0, 2pi)`.
    pub fn from_original(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.inner.to_chart_unwrapped(y, self.chart, self.anchor)
    }
}

impl VectorField for ChartField<'_> {
    fn dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn eval(&self, t: f64, z: &[f64], dz: &mut [f64]) {
        let cl = self.inner;
        let pert = cl.perturbation.as_ref();
        match (&cl.plant, self.chart) {
            (_, ChartTag::Original) => cl.eval_original(t, z, dz),
            (Plant::FirstOrder(m), ChartTag::Log) => {
                let (q, p) = (z[0], z[1]);
                let x = self.anchor * q.exp();
                let mu = p + m.mu0;
                let mut forcing = input_at(&m.input, t);
                if pert.is_some_and(|p| p.epsilon != 0.0) {
                    forcing += perturbation_at(
                        pert,
                        &Env {
                            t,
                            x,
                            mu,
                            ..Env::default()
                        },
                    );
                }
                dz[0] = if forcing != 0.0 { p + forcing / x } else { p };
                dz[1] = cl.mu_rate(x, mu);
            }
            (Plant::Oscillator(m), ChartTag::Polar | ChartTag::QphiP) => {
                let w = m.omega;
                let (r, phi, mu) = if self.chart == ChartTag::Polar {
                    (z[0], z[1], z[2])
                } else {
                    (self.anchor * z[0].exp(), z[1], z[2] + m.mu0)
                };
                let (s, c) = phi.sin_cos();
                let x = r * c;
                let xd = -r * w * s;
                let g = oscillator_excess(m, x, xd, mu, t, pert);
                let rdot_over_r = -g * s / (w * r);
                dz[0] = if self.chart == ChartTag::Polar {
                    rdot_over_r * r
                } else {
                    rdot_over_r
                };
                dz[1] = w - g * c / (r * w);
                dz[2] = cl.mu_rate(r, mu);
            }
            _ => unreachable!("chart admissibility checked at construction"),
        }
    }

    fn admissible(&self, z: &[f64]) -> bool {
        match self.chart {
            ChartTag::Original => self.inner.admissible(z),
            ChartTag::Polar => z[0] > 0.0,
            ChartTag::Log | ChartTag::QphiP => true,
        }
    }

    fn domain(&self) -> &str {
        match self.chart {
            ChartTag::Original => self.inner.domain(),
            ChartTag::Polar => "{r > 0}",
            ChartTag::Log | ChartTag::QphiP => "all of R^n",
        }
    }
}

/// Free-function form of [`ClosedLoop::transformed`].
pub fn transformed_rhs(chart: ChartTag, system: &ClosedLoop) -> Result<ChartField<'_>> {
    system.transformed(chart)
}
