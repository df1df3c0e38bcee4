//! Byzantine-robust aggregation for federated learning.
//!
//! The crate provides robust mean estimators (spectral filtering, no-regret
//! multiplicative weights, bucketing, and the classical coordinate-wise,
//! Krum, Bulyan and geometric-median rules), a suite of model-poisoning
//! attacks, simulated in-bucket secure aggregation, and a deterministic
//! simulator that runs robust gradient descent on synthetic convex tasks.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod error;
pub mod estimators;
pub mod lower_bound;
pub mod rng;
pub mod secure_agg;
pub mod sim;
pub mod space;
pub mod spectral;
pub mod task;
pub mod vector;

pub use error::{Error, Result};
pub use rng::{DetRng, RngState, StreamKind};
pub use space::ParamSpace;
pub use task::{TaskKind, TaskSpec};
pub use vector::{ParamVector, SampleMatrix};
