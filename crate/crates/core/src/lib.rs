//! Planning and simulation of straggler-tolerant distributed SGD that adapts
//! both the number of awaited workers `k` and the per-worker batch scale `β`.

// NaN-rejecting checks are written as `!(x > 0.0)`
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod delay_models;
pub mod error;
pub mod experiments;
pub mod planner;
pub mod quadrature;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
