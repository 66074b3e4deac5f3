//! Sparse Gaussian graphical models of region-wise features under a prior
//! conditional-independence graph, and the anomaly scores built on them.
//!
//! The pipeline: fit a graph-constrained graphical lasso to healthy subjects
//! ([`glasso`]), score new subjects by Mahalanobis distance and sort their
//! regions from most normal to most abnormal ([`anomaly`]), and evaluate the
//! whole thing with cross-validated AUC, BIC and random-graph baselines
//! ([`evaluation`]) on real or synthetic ([`synth`]) cohorts.

pub mod anomaly;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod glasso;
pub mod graphs;
pub mod linalg;
pub mod model;
pub mod plot;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    Dataset, EvalCurve, FitStats, GaussianModel, GraphKind, Metric, PriorGraph, SolverConfig, SortResult,
};
