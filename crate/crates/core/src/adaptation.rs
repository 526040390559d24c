//! Adaptation laws `mu' = f(amplitude) - g(mu)` and numerical validators for
//! the hypotheses under which each loop converges.
//!
//! The amplitude is `x` for the first-order system and the polar radius
//! `r = sqrt(x^2 + (xdot/omega)^2)` for the oscillator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdaptationLaw {
    /// `f(x) = -a ln x`, `g(mu) = b mu`.
    Log { a: f64, b: f64 },
    /// `f(x) = 1/(1 + x^2)`, `g(mu) = 1/(1 + exp(-mu))`.
    Sigmoid,
    /// `f(r) = 1/(1 + r^a)`, `g(mu) = b mu`.
    BoundedOsc { a: f64, b: f64 },
    /// User expressions; `f` in `x` (or `r`), `g` in `mu`.
    Custom { f: Expr, g: Expr },
}

impl AdaptationLaw {
    pub fn log(a: f64, b: f64) -> Result<Self> {
        let law = AdaptationLaw::Log { a, b };
        law.validate()?;
        Ok(law)
    }

    pub fn bounded_osc(a: f64, b: f64) -> Result<Self> {
        let law = AdaptationLaw::BoundedOsc { a, b };
        law.validate()?;
        Ok(law)
    }

    pub fn custom(f: &str, g: &str) -> Result<Self> {
        let law = AdaptationLaw::Custom {
            f: Expr::parse(f)?,
            g: Expr::parse(g)?,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AdaptationLaw::Log { a, b } | AdaptationLaw::BoundedOsc { a, b } => {
                if !(a.is_finite() && *a > 0.0 && b.is_finite() && *b > 0.0) {
                    return Err(Error::Validation(format!(
                        "{} law requires a, b > 0 (got a = {a}, b = {b})",
                        self.name()
                    )));
                }
            }
            AdaptationLaw::Sigmoid => {}
            AdaptationLaw::Custom { f, g } => {
                for var in [Var::T, Var::Xdot, Var::Mu] {
                    if f.uses(var) {
                        return Err(Error::Validation(format!(
                            "custom f may only depend on x (or r): {f}"
                        )));
                    }
                }
                for var in [Var::T, Var::X, Var::Xdot, Var::R] {
                    if g.uses(var) {
                        return Err(Error::Validation(format!(
                            "custom g may only depend on mu: {g}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            AdaptationLaw::Log { .. } => "log",
            AdaptationLaw::Sigmoid => "sigmoid",
            AdaptationLaw::BoundedOsc { .. } => "bounded_osc",
            AdaptationLaw::Custom { .. } => "custom",
        }
    }

    pub fn f(&self, amplitude: f64) -> f64 {
        match self {
            AdaptationLaw::Log { a, .. } => -a * amplitude.ln(),
            AdaptationLaw::Sigmoid => 1.0 / (1.0 + amplitude * amplitude),
            AdaptationLaw::BoundedOsc { a, .. } => 1.0 / (1.0 + amplitude.powf(*a)),
            AdaptationLaw::Custom { f, .. } => f.eval(&Env {
                x: amplitude,
                r: amplitude,
                ..Env::default()
            }),
        }
    }

    pub fn g(&self, mu: f64) -> f64 {
        match self {
            AdaptationLaw::Log { b, .. } | AdaptationLaw::BoundedOsc { b, .. } => b * mu,
            AdaptationLaw::Sigmoid => 1.0 / (1.0 + (-mu).exp()),
            AdaptationLaw::Custom { g, .. } => g.eval_in(Var::Mu, mu),
        }
    }

    /// `df/dx`, analytic for the built-in variants.
    pub fn df(&self, amplitude: f64) -> f64 {
        match self {
            AdaptationLaw::Log { a, .. } => -a / amplitude,
            AdaptationLaw::Sigmoid => {
                let d = 1.0 + amplitude * amplitude;
                -2.0 * amplitude / (d * d)
            }
            AdaptationLaw::BoundedOsc { a, .. } => {
                let ra = amplitude.powf(*a);
                -a * ra / amplitude / ((1.0 + ra) * (1.0 + ra))
            }
            AdaptationLaw::Custom { .. } => self.df_numeric(amplitude),
        }
    }

    /// `dg/dmu`, analytic for the built-in variants.
    pub fn dg(&self, mu: f64) -> f64 {
        match self {
            AdaptationLaw::Log { b, .. } | AdaptationLaw::BoundedOsc { b, .. } => *b,
            AdaptationLaw::Sigmoid => {
                let s = 1.0 / (1.0 + (-mu).exp());
                s * (1.0 - s)
            }
            AdaptationLaw::Custom { .. } => self.dg_numeric(mu),
        }
    }

    /// Central difference of `f` with a step relative to the amplitude, so the
    /// stencil stays on the positive half-line.
    pub fn df_numeric(&self, amplitude: f64) -> f64 {
        let h = 1e-6 * amplitude;
        (self.f(amplitude + h) - self.f(amplitude - h)) / (2.0 * h)
    }

    pub fn dg_numeric(&self, mu: f64) -> f64 {
        let h = 1e-6 * (1.0 + mu.abs());
        (self.g(mu + h) - self.g(mu - h)) / (2.0 * h)
    }

    /// `f(amplitude) - g(mu)`.
    pub fn rate(&self, amplitude: f64, mu: f64) -> Result<f64> {
        if !(amplitude > 0.0) {
            return Err(Error::DomainViolation {
                t: f64::NAN,
                reason: format!("adaptation law needs a positive amplitude, got {amplitude}"),
            });
        }
        Ok(self.f(amplitude) - self.g(mu))
    }
}

/// Free-function form of [`AdaptationLaw::rate`].
pub fn law_rate(law: &AdaptationLaw, amplitude: f64, mu: f64) -> Result<f64> {
    law.rate(amplitude, mu)
}

pub const BRACKET_MIN: f64 = 1e-12;
pub const BRACKET_MAX: f64 = 1e12;
pub const BRACKET_FACTOR: f64 = 10.0;

/// Solve `f(x) = g(mu0)` for `x > 0` by bisection inside a geometrically
/// expanded bracket around 1. When `f` is not monotone the root nearest to 1
/// (in decades) is returned.
pub fn equilibrium_point(law: &AdaptationLaw, mu0: f64) -> Result<f64> {
    let target = law.g(mu0);
    if !target.is_finite() {
        return Err(Error::NotInImage { target });
    }
    let d = |x: f64| law.f(x) - target;
    let d1 = d(1.0);
    if d1 == 0.0 {
        return Ok(1.0);
    }
    let (mut lo_prev, mut hi_prev) = (1.0, 1.0);
    let (mut d_lo_prev, mut d_hi_prev) = (d1, d1);
    let bracket = loop {
        let lo = lo_prev / BRACKET_FACTOR;
        let hi = hi_prev * BRACKET_FACTOR;
        if lo < BRACKET_MIN * 0.999 && hi > BRACKET_MAX * 1.001 {
            return Err(Error::NotInImage { target });
        }
        let (d_lo, d_hi) = (d(lo), d(hi));
        if d_lo == 0.0 {
            return Ok(lo);
        }
        if d_hi == 0.0 {
            return Ok(hi);
        }
        if d_lo.signum() != d_lo_prev.signum() && d_lo.is_finite() {
            break (lo, lo_prev, d_lo);
        }
        if d_hi.signum() != d_hi_prev.signum() && d_hi.is_finite() {
            break (hi_prev, hi, d_hi_prev);
        }
        lo_prev = lo;
        hi_prev = hi;
        d_lo_prev = d_lo;
        d_hi_prev = d_hi;
    };
    let (mut a, mut b, mut da) = bracket;
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let dm = d(m);
        if dm == 0.0 {
            return Ok(m);
        }
        if dm.signum() == da.signum() {
            a = m;
            da = dm;
        } else {
            b = m;
        }
    }
    Ok(if d(a).abs() <= d(b).abs() { a } else { b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisSet {
    /// Monotonicity and image conditions for convergence of the first-order loop.
    FirstOrder,
    /// Log law on the oscillator: `a <= b^2`.
    OscillatorLog,
    /// General law on the oscillator, via the effective coefficients.
    OscillatorGeneral,
}

/// One checked hypothesis. Positive margin means the condition holds with room
/// to spare; `witness` locates a violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    /// Optional conditions are reported but do not gate [`HypothesisReport::passed`].
    pub required: bool,
    pub witness: Option<Vec<f64>>,
}

impl Condition {
    fn new(
        name: &str,
        passed: bool,
        margin: f64,
        required: bool,
        witness: Option<Vec<f64>>,
    ) -> Self {
        let margin = if margin.is_finite() {
            margin
        } else if margin > 0.0 {
            f64::MAX
        } else {
            f64::MIN
        };
        Self {
            name: name.to_string(),
            passed,
            margin,
            required,
            witness: if passed { None } else { witness },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingInfo {
    pub description: String,
    pub points: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub set: HypothesisSet,
    pub conditions: Vec<Condition>,
    pub sampling: SamplingInfo,
    /// Linearisation coefficients `(a_eff, b_eff)` and `r*` for oscillator checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<EffectiveCoefficients>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCoefficients {
    pub a_eff: f64,
    pub b_eff: f64,
    pub r_star: f64,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.conditions
            .iter()
            .filter(|c| c.required)
            .all(|c| c.passed)
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| c.required && !c.passed)
    }
}

pub const MONOTONE_GRID_POINTS: usize = 400;
pub const AMPLITUDE_GRID: (f64, f64) = (1e-6, 1e6);
pub const MU_GRID: (f64, f64) = (-20.0, 20.0);

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Sampled check of the first-order convergence hypotheses: `f` strictly
/// decreasing, `g` strictly increasing, `g(mu0)` in the image of `f` for each
/// supplied `mu0`. The strict-derivative condition for local exponential
/// stability is reported as an optional entry.
pub fn validate_convergence_hypotheses(law: &AdaptationLaw, mu0s: &[f64]) -> HypothesisReport {
    let xs = log_grid(AMPLITUDE_GRID.0, AMPLITUDE_GRID.1, MONOTONE_GRID_POINTS);
    let mut mus = lin_grid(MU_GRID.0, MU_GRID.1, MONOTONE_GRID_POINTS);
    mus.extend(mu0s.iter().copied().filter(|m| m.is_finite()));
    mus.sort_by(f64::total_cmp);
    mus.dedup();

    let mut conditions = Vec::new();

    // Strict monotonicity from consecutive values.
    let (mut f_margin, mut f_witness) = (f64::INFINITY, None);
    for w in xs.windows(2) {
        let drop = law.f(w[0]) - law.f(w[1]);
        if !(drop >= f_margin) {
            f_margin = if drop.is_nan() {
                f64::NEG_INFINITY
            } else {
                drop
            };
            f_witness = Some(vec![w[0], w[1]]);
        }
    }
    conditions.push(Condition::new(
        "f strictly decreasing",
        f_margin > 0.0,
        f_margin,
        true,
        f_witness,
    ));

    let (mut g_margin, mut g_witness) = (f64::INFINITY, None);
    for w in mus.windows(2) {
        let rise = law.g(w[1]) - law.g(w[0]);
        if !(rise >= g_margin) {
            g_margin = if rise.is_nan() {
                f64::NEG_INFINITY
            } else {
                rise
            };
            g_witness = Some(vec![w[0], w[1]]);
        }
    }
    conditions.push(Condition::new(
        "g strictly increasing",
        g_margin > 0.0,
        g_margin,
        true,
        g_witness,
    ));

    // Image condition: margin is minus the number of failing mu0 values.
    let failing: Vec<f64> = mu0s
        .iter()
        .copied()
        .filter(|&m| equilibrium_point(law, m).is_err())
        .collect();
    conditions.push(Condition::new(
        "g(mu0) in image of f",
        failing.is_empty(),
        -(failing.len() as f64),
        true,
        Some(failing),
    ));

    // Strict derivative signs (local exponential stability).
    let (mut df_max, mut df_at) = (f64::NEG_INFINITY, 0.0);
    for &x in &xs {
        let d = law.df(x);
        if !(d <= df_max) {
            df_max = if d.is_nan() { f64::INFINITY } else { d };
            df_at = x;
        }
    }
    let (mut dg_min, mut dg_at) = (f64::INFINITY, 0.0);
    for &m in &mus {
        let d = law.dg(m);
        if !(d >= dg_min) {
            dg_min = if d.is_nan() { f64::NEG_INFINITY } else { d };
            dg_at = m;
        }
    }
    let strict_margin = (-df_max).min(dg_min);
    conditions.push(Condition::new(
        "df/dx < 0 and dg/dmu > 0",
        strict_margin > 0.0,
        strict_margin,
        false,
        Some(if -df_max <= dg_min {
            vec![df_at]
        } else {
            vec![dg_at]
        }),
    ));

    HypothesisReport {
        set: HypothesisSet::FirstOrder,
        conditions,
        sampling: SamplingInfo {
            description: format!(
                "f on {MONOTONE_GRID_POINTS} log-spaced points in [{:e}, {:e}]; g on {} points in [{}, {}] plus supplied mu0",
                AMPLITUDE_GRID.0, AMPLITUDE_GRID.1, MONOTONE_GRID_POINTS, MU_GRID.0, MU_GRID.1
            ),
            points: xs.len() + mus.len(),
            tolerance: 0.0,
        },
        coefficients: None,
    }
}

/// Relative slack on `a_eff <= b_eff^2` absorbing rounding at the boundary.
pub const SECTOR_BOUNDARY_TOL: f64 = 1e-12;

/// `a_eff = -f'(r*) r*` and `b_eff = g'(mu0)` at the equilibrium amplitude.
pub fn effective_coefficients(law: &AdaptationLaw, mu0: f64) -> Result<EffectiveCoefficients> {
    let r_star = equilibrium_point(law, mu0)?;
    Ok(effective_coefficients_at(law, mu0, r_star))
}

pub fn effective_coefficients_at(
    law: &AdaptationLaw,
    mu0: f64,
    r_star: f64,
) -> EffectiveCoefficients {
    EffectiveCoefficients {
        a_eff: -law.df(r_star) * r_star,
        b_eff: law.dg(mu0),
        r_star,
    }
}

/// Check the oscillator hypotheses `0 < a_eff <= b_eff^2`, `b_eff > 0`.
pub fn validate_oscillator_hypotheses(
    law: &AdaptationLaw,
    mu0: f64,
    omega: f64,
) -> Result<HypothesisReport> {
    let coeffs = effective_coefficients(law, mu0)?;
    Ok(validate_oscillator_hypotheses_at(law, mu0, omega, coeffs))
}

pub fn validate_oscillator_hypotheses_at(
    law: &AdaptationLaw,
    mu0: f64,
    omega: f64,
    coeffs: EffectiveCoefficients,
) -> HypothesisReport {
    let EffectiveCoefficients {
        a_eff,
        b_eff,
        r_star,
    } = coeffs;
    let witness = Some(vec![mu0, r_star, a_eff, b_eff]);
    let slack = SECTOR_BOUNDARY_TOL * (1.0 + b_eff * b_eff);
    let sector = b_eff * b_eff - a_eff;
    let conditions = vec![
        Condition::new("omega > 0", omega > 0.0, omega, true, Some(vec![omega])),
        Condition::new("a_eff > 0", a_eff > 0.0, a_eff, true, witness.clone()),
        Condition::new(
            "a_eff <= b_eff^2",
            sector >= -slack,
            sector,
            true,
            witness.clone(),
        ),
        Condition::new("b_eff > 0", b_eff > 0.0, b_eff, true, witness),
    ];
    let set = if matches!(law, AdaptationLaw::Log { .. }) {
        HypothesisSet::OscillatorLog
    } else {
        HypothesisSet::OscillatorGeneral
    };
    HypothesisReport {
        set,
        conditions,
        sampling: SamplingInfo {
            description: match law {
                AdaptationLaw::Custom { .. } => "central differences at (r*, mu0)".into(),
                _ => "analytic derivatives at (r*, mu0)".into(),
            },
            points: 1,
            tolerance: SECTOR_BOUNDARY_TOL,
        },
        coefficients: Some(coeffs),
    }
}
