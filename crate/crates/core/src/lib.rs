//! Primal-dual proximal block coordinate update solvers for linearly
//! constrained multi-block convex programs.
//!
//! The crate provides three engines: an accelerated proximal Jacobian ADMM,
//! an accelerated randomized primal-dual block coordinate update method, and
//! a linearly convergent variant for problems with an independent smooth
//! block. Parameter schedules are generated from closed-form recipes that
//! carry O(1/t^2) (respectively linear) rate certificates, and the
//! [`diagnostics`] module verifies those certificates numerically on real
//! runs. [`generate`] builds seeded random QP and log-barrier LP instances;
//! [`oracle`] produces certified ground-truth solutions to measure against.

pub mod diagnostics;
pub mod error;
pub mod generate;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
