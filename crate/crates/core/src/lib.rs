//! Multiclass demographic-parity label debiasing.
//!
//! The core routine, [`r2b_debias`], projects a soft label matrix onto the set
//! of row-stochastic matrices whose per-class group means lie within a
//! tolerance of each other, using ADMM with an exact per-class subsolver.
//! Baselines, a synthetic benchmark generator and a kNN evaluation harness
//! live alongside it.

pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod evalharness;
pub mod metrics;
pub mod r2b;
pub mod subsolver;
pub mod synthgen;

pub use config::DebiasConfig;
pub use data::{GroupVector, LabelMatrix, TabularDataset};
pub use error::{Error, ErrorKind, Result};
pub use metrics::{multiclass_dp, MetricReport};
pub use r2b::{r2b_debias, DebiasReport};
