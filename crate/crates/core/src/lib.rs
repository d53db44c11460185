//! Two-timescale stochastic approximation for stochastic bilevel optimization.
//!
//! The core loop ([`ttsa::ttsa_run`]) alternates a fast inner SGD step on `y` with
//! a slow projected outer step on `x` driven by a randomized Neumann-series
//! hypergradient estimate ([`hypergrad::neumann_hypergradient`]). Verification
//! problems live in [`problems`]; the natural actor-critic instantiation in [`nac`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod constants;
pub mod error;
pub mod hypergrad;
pub mod linalg;
pub mod nac;
pub mod oracle;
pub mod problems;
pub mod projection;
pub mod rng;
pub mod schedule;
pub mod ttsa;

pub use constants::{DerivedConstants, ProblemConstants};
pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use oracle::{DenseDerivatives, DenseSampling, ExactOracle, StochasticBilevelOracle};
pub use projection::Constraint;
pub use schedule::{Regime, StepSchedule};
