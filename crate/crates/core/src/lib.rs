//! Approximation algorithms for non-metric uncapacitated facility location
//! and weighted k-medians.
//!
//! The crate provides randomized rounding schemes, their derandomized
//! greedy counterparts, Lagrangian-relaxation solvers for the fractional
//! problems, exact brute-force oracles, and Monte Carlo experiments for the
//! underlying concentration bounds.

// parameter checks use `!(x > 0.0)` on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod greedy;
pub mod lagrangian;
pub mod model;
pub mod oracle;
pub mod parallel;
pub mod probability;
pub mod rounding;
pub mod seed;

pub use error::{Error, Result};
