//! Bayesian contact-mode estimation and information-gain design metrics for
//! compliant robot/environment systems.
//!
//! The crate is organized bottom-up:
//!
//! - [`gaussian`]: Gaussian densities, entropies and the mixture-entropy bound.
//! - [`model`], [`trace`], [`simulate`]: contact modes, the two-mass plant, recorded
//!   traces and a seeded ground-truth simulator.
//! - [`estimator`]: recursive mode inference (Bayes/HMM updates, a bank of
//!   per-mode Kalman filters, steady-state Riccati covariance).
//! - [`infogain`]: fully and partially observed information-gain bounds and a
//!   Monte Carlo estimator of the exact gain.
//! - [`sysid`]: simulation-error identification of the two-mass parameters.
//! - [`gradient`]: finite-difference design sensitivities of the bound.
//! - [`scenario`]: reusable synthetic contact experiments.
//! - [`cli`]: configuration documents and the command implementations behind the
//!   `contactig` binary.

// `!(x > 0.0)` guards reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimator;
pub mod gaussian;
pub mod gradient;
pub mod infogain;
pub mod model;
pub mod optim;
pub mod scenario;
pub mod simulate;
pub mod sysid;
pub mod trace;

pub use error::{Error, Result};
pub use gaussian::{BeliefVector, Gaussian};
pub use model::{ContactMode, MagazineCondition, StateSpace, TwoMassModel};
pub use trace::Trace;
