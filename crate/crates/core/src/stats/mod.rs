//! Numerical statistics kernel.
//!
//! Everything here is written against plain slices and `nalgebra` matrices and
//! knows nothing about occupations or ratings. Estimators are deterministic for
//! a given input order: reductions run in a fixed order.

mod auc;
mod cv;
mod descriptive;
mod design;
mod glm;
mod kde;
mod linalg;
mod ols;
mod quantile;
mod rank;

use thiserror::Error;

pub use auc::{auc, auc_compare_paired, auc_compare_unpaired, AucComparison, AucResult};
pub use cv::{cv_omega, AdoptionData, CvOmegaResult, FoldResult, CANONICAL_OMEGA};
pub use descriptive::{
    effective_n, standardize, weighted_cdf, weighted_mean, weighted_pearson, weighted_quantile, weighted_sd,
    weighted_share,
};
pub use design::{encode_keys, CovType, Design, Factor, FitOptions, FitResult};
pub use glm::{ame, glm_binary, predictive_margin, Ame, BinaryFit, GlmOptions, Link, Margin};
pub use kde::{kde, Bandwidth, KdeCurve};
pub(crate) use linalg::f_quantile;
pub use linalg::lstsq_svd;
pub use ols::{cluster_meat, wald_test, wald_zero, wls_fe, WaldTest};
pub use quantile::{check_loss, quantile_reg, QuantileOptions};
pub use rank::{mid_ranks, spearman, Correlation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("regressor {column} is collinear with the other regressors or the absorbed fixed effects")]
    Collinear { column: String },
    #[error("fixed-effect demeaning did not converge after {sweeps} sweeps (max change {max_change:e})")]
    FeNotConverged { sweeps: usize, max_change: f64 },
    #[error("perfect or quasi-perfect separation detected ({0})")]
    Separation(String),
    #[error("did not converge after {iterations} iterations (gradient norm {gradient:e})")]
    NotConverged { iterations: usize, gradient: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
}
