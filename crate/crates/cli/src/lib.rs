//! Experiment runner for the large-batch diffusion laboratory: config
//! parsing, the SB / LB / +LR / +GBN / +RA ladder, and CSV and SVG reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod config;
pub mod experiments;
pub mod report;
pub mod runs;
pub mod svg;

pub use config::{parse_config, ConfigError, Experiment, RunConfig};
pub use experiments::execute;
