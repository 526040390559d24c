use thiserror::Error;

/// Errors raised by the integrators, models, and analyses.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("state left the admissible domain at t = {t}: {reason}")]
    DomainViolation { t: f64, reason: String },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("maximum number of steps ({max_steps}) exceeded at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },

    #[error("supplied Jacobian disagrees with finite differences (max deviation {deviation:e})")]
    JacobianMismatch { deviation: f64 },

    #[error("chart {chart} is not admissible for system {system}")]
    ChartMismatch { chart: String, system: String },

    #[error("target value {target} is not in the image of f on [1e-12, 1e12]")]
    NotInImage { target: f64 },

    #[error("KYP storage infeasible: best max eigenvalue {best_eigenvalue:e}")]
    Infeasible { best_eigenvalue: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("expression error: {0}")]
    Expression(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by the integration itself rather than by
    /// malformed input.
    pub fn is_integration_failure(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteState { .. }
                | Error::StepUnderflow { .. }
                | Error::MaxStepsExceeded { .. }
                | Error::DomainViolation { .. }
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFiniteState { .. } => "non_finite_state",
            Error::DomainViolation { .. } => "domain_violation",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::MaxStepsExceeded { .. } => "max_steps_exceeded",
            Error::JacobianMismatch { .. } => "jacobian_mismatch",
            Error::ChartMismatch { .. } => "chart_mismatch",
            Error::NotInImage { .. } => "not_in_image",
            Error::Infeasible { .. } => "infeasible",
            Error::HypothesisViolation(_) => "hypothesis_violation",
            Error::Validation(_) => "validation",
            Error::Expression(_) => "expression",
        }
    }
}
