//! Feedback self-tuning of dynamical systems to their bifurcation point.
//!
//! The crate simulates first-order and oscillator plants whose bifurcation
//! parameter `mu` is adapted by a law `mu' = f(amplitude) - g(mu)`, and checks
//! the resulting convergence numerically: Lyapunov decrease, positive-real and
//! KYP storage certificates, Floquet multipliers of the tuned orbit, and
//! falsification searches for practical stability under perturbations.

// `!(x > y)` is used on purpose so that NaN fails admissibility checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptation;
pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod ode;
pub mod scenario;
pub mod stabcert;

pub use error::{Error, Result};
