//! Nash-bargaining gradient aggregation for multi-task optimization.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod linalg;
pub mod nash;
pub mod optimizer;
pub mod problems;
pub mod check;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod output;
pub mod plot;
