//! Explicit Runge–Kutta integration for small non-stiff systems.
//!
//! Two integrators share one driver:
//!
//! - classic fixed-step RK4, used where reproducible step sequences matter;
//! - the Dormand–Prince 5(4) embedded pair with PI step-size control, the
//!   default for everything else.
//!
//! Both honour an optional domain guard. A [`VectorField`] can declare an
//! admissible set (for example `x > 0`); with the guard on, the adaptive
//! integrator rejects any step whose stages leave that set and halves the step,
//! raising [`Error::DomainViolation`] only once the step underflows.
//!
//! [`integrate_with_variational`] augments a system with its variational
//! equation `Φ' = J(t, y) Φ` and returns the fundamental matrix over the
//! interval, which the Floquet analysis consumes.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-hand side `dy/dt = f(t, y)` of an ODE system.
pub trait VectorField {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]);

    /// Admissibility predicate checked when the domain guard is enabled.
    fn admissible(&self, _y: &[f64]) -> bool {
        true
    }

    /// Human-readable description of the admissible set.
    fn domain(&self) -> &str {
        "all of R^n"
    }
}

impl<V: VectorField + ?Sized> VectorField for &V {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        (**self).eval(t, y, dydt)
    }
    fn admissible(&self, y: &[f64]) -> bool {
        (**self).admissible(y)
    }
    fn domain(&self) -> &str {
        (**self).domain()
    }
}

/// Adapter turning a closure into a [`VectorField`] on all of `R^n`.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        (self.f)(t, y, dydt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Method {
    /// Classic RK4 with constant step `step` (final partial step allowed).
    Fixed { step: f64 },
    /// Dormand–Prince 5(4) with mixed absolute/relative error control.
    Adaptive {
        abs_tol: f64,
        rel_tol: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_step: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(flatten)]
    pub method: Method,
    pub max_steps: usize,
    pub domain_guard: bool,
}

pub const DEFAULT_TOL: f64 = 1e-9;

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::adaptive(DEFAULT_TOL, DEFAULT_TOL)
    }
}

impl IntegratorConfig {
    pub fn fixed(step: f64) -> Self {
        Self {
            method: Method::Fixed { step },
            max_steps: 50_000_000,
            domain_guard: true,
        }
    }

    pub fn adaptive(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            method: Method::Adaptive {
                abs_tol,
                rel_tol,
                initial_step: None,
            },
            max_steps: 10_000_000,
            domain_guard: true,
        }
    }

    pub fn with_domain_guard(mut self, on: bool) -> Self {
        self.domain_guard = on;
        self
    }

    pub fn with_initial_step(mut self, h: f64) -> Self {
        if let Method::Adaptive { initial_step, .. } = &mut self.method {
            *initial_step = Some(h);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Fixed { step } => {
                if !(step.is_finite() && step > 0.0) {
                    return Err(Error::Validation(format!("step must be > 0, got {step}")));
                }
            }
            Method::Adaptive {
                abs_tol,
                rel_tol,
                initial_step,
            } => {
                if !(abs_tol.is_finite() && abs_tol > 0.0 && rel_tol.is_finite() && rel_tol > 0.0) {
                    return Err(Error::Validation(format!(
                        "tolerances must be > 0, got abs_tol = {abs_tol}, rel_tol = {rel_tol}"
                    )));
                }
                if let Some(h) = initial_step {
                    if !(h.is_finite() && h > 0.0) {
                        return Err(Error::Validation(format!(
                            "initial step must be > 0, got {h}"
                        )));
                    }
                }
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Validation("max_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Nominal accuracy of the configuration, used to scale a-posteriori checks.
    pub fn tolerance(&self) -> f64 {
        match self.method {
            Method::Fixed { step } => step.powi(4),
            Method::Adaptive {
                abs_tol, rel_tol, ..
            } => abs_tol.max(rel_tol),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Time-stamped samples of a solution plus integrator diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn last_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(f64::NAN)
    }

    pub fn component(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(move |s| s[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.times
            .iter()
            .copied()
            .zip(self.states.iter().map(Vec::as_slice))
    }
}

/// Why a driven integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    Completed,
    /// The observer requested an early stop.
    Interrupted,
}

/// Integrate with fixed-step RK4 from `t0` to `t1`.
pub fn integrate_fixed<V: VectorField>(
    field: &V,
    y0: &[f64],
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<Trajectory> {
    integrate(field, y0, t0, t1, &IntegratorConfig::fixed(h))
}

/// Integrate with the adaptive Dormand–Prince pair, guard enabled.
pub fn integrate_adaptive<V: VectorField>(
    field: &V,
    y0: &[f64],
    t0: f64,
    t1: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Trajectory> {
    integrate(
        field,
        y0,
        t0,
        t1,
        &IntegratorConfig::adaptive(abs_tol, rel_tol),
    )
}

/// Integrate and record every accepted step.
pub fn integrate<V: VectorField>(
    field: &V,
    y0: &[f64],
    t0: f64,
    t1: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let (stats, _) = drive(field, y0, t0, t1, config, |t, y| {
        times.push(t);
        states.push(y.to_vec());
        ControlFlow::Continue(())
    })?;
    Ok(Trajectory {
        times,
        states,
        stats,
    })
}

/// Integrate, handing each accepted sample (including the initial one) to
/// `observer`. The observer may stop the integration early.
pub fn drive<V, O>(
    field: &V,
    y0: &[f64],
    t0: f64,
    t1: f64,
    config: &IntegratorConfig,
    mut observer: O,
) -> Result<(StepStats, Stop)>
where
    V: VectorField,
    O: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    config.validate()?;
    let n = field.dim();
    if y0.len() != n {
        return Err(Error::Validation(format!(
            "initial state has dimension {}, field expects {n}",
            y0.len()
        )));
    }
    if !(t0.is_finite() && t1.is_finite()) || t1 < t0 {
        return Err(Error::Validation(format!("invalid interval [{t0}, {t1}]")));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { t: t0 });
    }
    if config.domain_guard && !field.admissible(y0) {
        return Err(Error::DomainViolation {
            t: t0,
            reason: format!("initial state {y0:?} outside {}", field.domain()),
        });
    }
    if observer(t0, y0).is_break() {
        return Ok((StepStats::default(), Stop::Interrupted));
    }
    if t1 == t0 {
        return Ok((StepStats::default(), Stop::Completed));
    }
    match config.method {
        Method::Fixed { step } => rk4_loop(field, y0, t0, t1, step, config, &mut observer),
        Method::Adaptive {
            abs_tol,
            rel_tol,
            initial_step,
        } => dopri_loop(
            field,
            y0,
            t0,
            t1,
            Tolerance { abs_tol, rel_tol },
            initial_step,
            config,
            &mut observer,
        ),
    }
}

fn rk4_loop<V, O>(
    field: &V,
    y0: &[f64],
    t0: f64,
    t1: f64,
    h: f64,
    config: &IntegratorConfig,
    observer: &mut O,
) -> Result<(StepStats, Stop)>
where
    V: VectorField,
    O: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    let n = field.dim();
    let mut stats = StepStats::default();
    let mut y = y0.to_vec();
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];
    let mut y_next = vec![0.0; n];
    let span = t1 - t0;
    // Step count chosen so that t0 + i*h is reproduced exactly, with at most one
    // final partial step.
    let full_steps = (span / h * (1.0 + 1e-12)).floor() as usize;
    let mut i = 0usize;
    let mut t = t0;
    while t < t1 {
        if stats.accepted >= config.max_steps {
            return Err(Error::MaxStepsExceeded {
                t,
                max_steps: config.max_steps,
            });
        }
        let t_next = if i < full_steps {
            t0 + (i + 1) as f64 * h
        } else {
            t1
        };
        let t_next = t_next.min(t1);
        let hs = t_next - t;
        if hs <= 0.0 {
            break;
        }
        let guard = |s: &[f64]| -> Result<()> {
            if config.domain_guard && !field.admissible(s) {
                return Err(Error::DomainViolation {
                    t,
                    reason: format!("stage state outside {}", field.domain()),
                });
            }
            Ok(())
        };

        field.eval(t, &y, &mut k[0]);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * hs * k[0][j];
        }
        guard(&tmp)?;
        field.eval(t + 0.5 * hs, &tmp, &mut k[1]);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * hs * k[1][j];
        }
        guard(&tmp)?;
        field.eval(t + 0.5 * hs, &tmp, &mut k[2]);
        for j in 0..n {
            tmp[j] = y[j] + hs * k[2][j];
        }
        guard(&tmp)?;
        field.eval(t + hs, &tmp, &mut k[3]);
        for j in 0..n {
            y_next[j] = y[j] + hs / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
        }
        stats.evaluations += 4;
        if y_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: t_next });
        }
        guard(&y_next)?;
        std::mem::swap(&mut y, &mut y_next);
        t = t_next;
        i += 1;
        stats.accepted += 1;
        if observer(t, &y).is_break() {
            return Ok((stats, Stop::Interrupted));
        }
    }
    Ok((stats, Stop::Completed))
}

#[derive(Debug, Clone, Copy)]
struct Tolerance {
    abs_tol: f64,
    rel_tol: f64,
}

impl Tolerance {
    fn error_norm(&self, y: &[f64], y_new: &[f64], err: &[f64]) -> f64 {
        let n = y.len() as f64;
        let sum: f64 = y
            .iter()
            .zip(y_new)
            .zip(err)
            .map(|((a, b), e)| {
                let sc = self.abs_tol + self.rel_tol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum();
        (sum / n).sqrt()
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;

#[allow(clippy::too_many_arguments)]
fn dopri_loop<V, O>(
    field: &V,
    y0: &[f64],
    t0: f64,
    t1: f64,
    tol: Tolerance,
    initial_step: Option<f64>,
    config: &IntegratorConfig,
    observer: &mut O,
) -> Result<(StepStats, Stop)>
where
    V: VectorField,
    O: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    let n = field.dim();
    let span = t1 - t0;
    let h_min = 1e-14 * span;
    let mut stats = StepStats::default();
    let mut y = y0.to_vec();
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];

    field.eval(t0, &y, &mut k[0]);
    stats.evaluations += 1;
    let mut h = match initial_step {
        Some(h) => h.min(span),
        None => initial_step_guess(field, t0, &y, &k[0], span, tol, &mut stats),
    };
    let expo = 0.2 - PI_BETA * 0.75;
    let mut fac_old: f64 = 1e-4;
    let mut t = t0;
    let mut last_rejected = false;

    while t < t1 {
        if stats.accepted + stats.rejected >= config.max_steps {
            return Err(Error::MaxStepsExceeded {
                t,
                max_steps: config.max_steps,
            });
        }
        if h < h_min {
            return Err(underflow_error(field, config, t, h, &y));
        }
        let last = t + h >= t1 || t1 - (t + h) < h_min;
        if last {
            h = t1 - t;
        }

        // Stages 2..7; a stage outside the admissible set rejects the step.
        let mut outside = false;
        let stage_rows: [(&[f64], f64); 6] = [
            (&[A21], C2),
            (&[A31, A32], C3),
            (&[A41, A42, A43], C4),
            (&[A51, A52, A53, A54], C5),
            (&[A61, A62, A63, A64, A65], 1.0),
            (&[A71, 0.0, A73, A74, A75, A76], 1.0),
        ];
        for (s, (row, c)) in stage_rows.iter().enumerate() {
            for j in 0..n {
                let mut acc = 0.0;
                for (m, a) in row.iter().enumerate() {
                    acc += a * k[m][j];
                }
                stage[j] = y[j] + h * acc;
            }
            if stage.iter().any(|v| !v.is_finite())
                || (config.domain_guard && !field.admissible(&stage))
            {
                outside = true;
                break;
            }
            if s == 5 {
                y_new.copy_from_slice(&stage);
            }
            field.eval(t + c * h, &stage, &mut k[s + 1]);
            stats.evaluations += 1;
        }
        if outside {
            stats.rejected += 1;
            h *= 0.5;
            last_rejected = true;
            continue;
        }

        for j in 0..n {
            err[j] = h
                * (E1 * k[0][j]
                    + E3 * k[2][j]
                    + E4 * k[3][j]
                    + E5 * k[4][j]
                    + E6 * k[5][j]
                    + E7 * k[6][j]);
        }
        let err_norm = tol.error_norm(&y, &y_new, &err);
        if !err_norm.is_finite() {
            stats.rejected += 1;
            h *= 0.5;
            last_rejected = true;
            continue;
        }
        let fac11 = err_norm.powf(expo);
        if err_norm <= 1.0 {
            let mut fac = fac11 / fac_old.powf(PI_BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err_norm.max(1e-4);
            t = if last { t1 } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            stats.accepted += 1;
            last_rejected = false;
            if observer(t, &y).is_break() {
                return Ok((stats, Stop::Interrupted));
            }
            h = h_new;
        } else {
            stats.rejected += 1;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
    Ok((stats, Stop::Completed))
}

fn underflow_error<V: VectorField>(
    field: &V,
    config: &IntegratorConfig,
    t: f64,
    h: f64,
    y: &[f64],
) -> Error {
    if config.domain_guard {
        // Probe whether the guard is what keeps shrinking the step.
        let mut dy = vec![0.0; y.len()];
        field.eval(t, y, &mut dy);
        let probe: Vec<f64> = y.iter().zip(&dy).map(|(a, d)| a + h * 8.0 * d).collect();
        if !field.admissible(&probe) || !field.admissible(y) {
            return Error::DomainViolation {
                t,
                reason: format!("trajectory reached the boundary of {}", field.domain()),
            };
        }
    }
    Error::StepUnderflow { t, h }
}

fn initial_step_guess<V: VectorField>(
    field: &V,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
    tol: Tolerance,
    stats: &mut StepStats,
) -> f64 {
    let n = y0.len() as f64;
    let scale = |v: f64| tol.abs_tol + tol.rel_tol * v.abs();
    let d0 = (y0.iter().map(|v| (v / scale(*v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y0
        .iter()
        .zip(f0)
        .map(|(v, d)| (d / scale(*v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(v, d)| v + h0 * d).collect();
    let mut f1 = vec![0.0; y0.len()];
    field.eval(t0 + h0, &y1, &mut f1);
    stats.evaluations += 1;
    let d2 = (y0
        .iter()
        .zip(f0.iter().zip(&f1))
        .map(|(v, (a, b))| ((b - a) / scale(*v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    if !h1.is_finite() {
        return h0;
    }
    (100.0 * h0).min(h1).min(span)
}

/// Fundamental matrix `Φ(t1, t0)` of a linear(ised) system, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FundamentalMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let n = self.dim;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = (0..n).map(|m| self.get(i, m) * rhs.get(m, j)).sum();
            }
        }
        Self { dim: n, data }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn as_2x2(&self) -> Option<[[f64; 2]; 2]> {
        (self.dim == 2).then(|| [[self.data[0], self.data[1]], [self.data[2], self.data[3]]])
    }
}

/// Central-difference Jacobian of `field` at `(t, y)`, row-major.
pub fn finite_difference_jacobian<V: VectorField>(field: &V, t: f64, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut jac = vec![0.0; n * n];
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        let h = 1e-6 * (1.0 + y[j].abs());
        yp[j] = y[j] + h;
        field.eval(t, &yp, &mut fp);
        yp[j] = y[j] - h;
        field.eval(t, &yp, &mut fm);
        yp[j] = y[j];
        for i in 0..n {
            jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Relative tolerance of the Jacobian consistency check.
pub const JACOBIAN_CHECK_TOL: f64 = 1e-4;

struct Augmented<'a, V, J> {
    field: &'a V,
    jacobian: &'a J,
    n: usize,
}

impl<V, J> VectorField for Augmented<'_, V, J>
where
    V: VectorField,
    J: Fn(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.n + self.n * self.n
    }

    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let n = self.n;
        let (base, phi) = y.split_at(n);
        let (dbase, dphi) = dydt.split_at_mut(n);
        self.field.eval(t, base, dbase);
        let mut jac = [0.0; 16];
        let mut heap;
        let jac: &mut [f64] = if n * n <= 16 {
            &mut jac[..n * n]
        } else {
            heap = vec![0.0; n * n];
            &mut heap
        };
        (self.jacobian)(t, base, jac);
        for i in 0..n {
            for j in 0..n {
                dphi[i * n + j] = (0..n).map(|m| jac[i * n + m] * phi[m * n + j]).sum();
            }
        }
    }

    fn admissible(&self, y: &[f64]) -> bool {
        self.field.admissible(&y[..self.n])
    }

    fn domain(&self) -> &str {
        self.field.domain()
    }
}

/// Integrate `field` together with its variational equation.
///
/// `jacobian(t, y, out)` writes the row-major state Jacobian of `field`; it is
/// checked against central differences at `(t0, y0)` before integrating.
pub fn integrate_with_variational<V, J>(
    field: &V,
    jacobian: J,
    y0: &[f64],
    t0: f64,
    t1: f64,
    config: &IntegratorConfig,
) -> Result<(Trajectory, FundamentalMatrix)>
where
    V: VectorField,
    J: Fn(f64, &[f64], &mut [f64]),
{
    let n = field.dim();
    if y0.len() != n {
        return Err(Error::Validation(format!(
            "initial state has dimension {}, field expects {n}",
            y0.len()
        )));
    }
    let mut analytic = vec![0.0; n * n];
    jacobian(t0, y0, &mut analytic);
    let numeric = finite_difference_jacobian(field, t0, y0);
    let scale = analytic.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let deviation = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if !(deviation <= JACOBIAN_CHECK_TOL * scale) {
        return Err(Error::JacobianMismatch { deviation });
    }

    let aug = Augmented {
        field,
        jacobian: &jacobian,
        n,
    };
    let mut z0 = y0.to_vec();
    z0.extend(FundamentalMatrix::identity(n).data);
    let full = integrate(&aug, &z0, t0, t1, config)?;
    let last = full.last_state();
    let phi = FundamentalMatrix {
        dim: n,
        data: last[n..].to_vec(),
    };
    let traj = Trajectory {
        times: full.times,
        states: full
            .states
            .into_iter()
            .map(|mut s| {
                s.truncate(n);
                s
            })
            .collect(),
        stats: full.stats,
    };
    Ok((traj, phi))
}
