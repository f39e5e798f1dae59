//! Query performance prediction analysis.
//!
//! The pipeline reads TREC runs and qrels, computes post-retrieval
//! predictors per query ([`predictors`]) and per-query effectiveness
//! ([`effectiveness`]), flags queries whose predictor vectors are
//! multivariate outliers ([`outliers`]), and reports how the
//! predictor-effectiveness correlation changes once the flagged queries
//! are set aside ([`analysis`]).
//!
//! Data-parallel loops honour [`exec::Execution`]; the `parallel` feature
//! (on by default) enables rayon.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod effectiveness;
pub mod error;
pub mod exec;
pub mod outliers;
pub mod predictors;
pub mod robust_stats;
pub mod synthetic;
pub mod trec_io;

pub use error::{QppError, Result};
pub use exec::Execution;
