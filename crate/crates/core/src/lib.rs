//! Integer route flows from link counts: exact feasible-set geometry, a
//! componentwise MCMC sampler with adaptive partitions, and likelihood and
//! Bayesian inference for mean route flows.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fixtures;
pub mod inference;
pub mod intlin;
pub mod io;
pub mod linalg;
pub mod models;
pub mod netmodel;
pub mod polytope;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod simplex;
pub mod special;

pub use error::{Error, Result};
pub use netmodel::{LinkCountSample, RoutingMatrix};
pub use polytope::FlowState;

/// Exact integers for determinants and inverses.
pub type Int = num_bigint::BigInt;
/// Exact rationals.
pub type Rational = num_rational::Ratio<Int>;

pub type TrafficModel64 = models::TrafficModel<f64>;
pub type TrafficModel32 = models::TrafficModel<f32>;
