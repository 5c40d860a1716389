//! Numerical core for PAC-Bayesian generalization bounds whose complexity term is
//! controlled through log-Sobolev inequalities on the data distribution.
//!
//! The crate provides labeled Gaussian mixtures, functional-entropy and Herbst
//! estimators, a small feedforward network library with analytic gradients, the
//! complexity-term calculators and an SGD training loop.

pub mod bounds;
pub mod distributions;
pub mod entropy;
pub mod error;
pub mod models;
pub mod rng;
pub mod stats;
pub mod train;

pub use distributions::{DataSource, DiagonalGaussian, LabeledMixture, Sample};
pub use error::{Error, Result};
pub use models::{LayerSpec, LossKind, Network};
pub use rng::Seed;
