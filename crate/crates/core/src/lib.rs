//! Numerical laboratory for large-batch SGD: a small network with ghost
//! batch normalization, learning-rate and noise scaling rules, exact
//! gradient-covariance checks, weight-distance diffusion analysis and
//! random walks on random potentials.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance_lab;
pub mod datasets;
pub mod diffusion_lab;
mod error;
pub mod network;
pub mod numerics;
pub mod optimizer;
pub mod random_walk_sim;
pub mod stats;
pub mod training;

pub use error::{Error, Result};
