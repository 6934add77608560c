//! Numerical core for weakly interacting diffusions driven by individual
//! Brownian motions and a small common Brownian motion.
//!
//! The crate is `no_std` (with `alloc`) and carries no IO. It provides:
//!
//! - [`model`]: coefficient sets, initial laws and probing-based validation,
//! - [`measure`] and [`metric`]: finite atomic measures and the bounded-Lipschitz
//!   distance between them (exact via a transport problem, or a dictionary lower bound),
//! - [`simulate`]: Euler–Maruyama ensembles (unweighted and Feynman–Kac weighted),
//!   controlled dynamics and Girsanov log-weights,
//! - [`limit`]: McKean–Vlasov limits by Picard iteration over measure flows,
//! - [`laplace`]: Laplace functionals, control costs, control optimization and
//!   importance sampling,
//! - [`rate`]: noise-intensity regimes, the quadratic rate oracle and decay-rate fitting.
//!
//! Randomness comes from a counter-based generator ([`rng::NoisePlan`]) keyed by
//! `(seed, replica, particle, step)`, so results do not depend on evaluation order.
//! Replica loops go through an [`exec::Executor`]; [`exec::Sequential`] is provided
//! here and parallel executors live with the std companion crate.
#![no_std]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod control;
pub mod error;
pub mod exec;
pub mod functional;
pub mod laplace;
pub mod limit;
pub mod math;
pub mod measure;
pub mod metric;
pub mod model;
pub mod optimize;
pub mod rate;
pub mod rng;
pub mod simulate;
mod transport;

pub use error::{Error, Result};
