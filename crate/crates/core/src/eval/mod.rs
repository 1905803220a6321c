//! Goodness-of-fit: Wasserstein distances, AMC, cross-validation and random splits.

mod cv;
mod wasserstein;

pub use cv::{
    correlation_difference, fold_partition, kfold_cv, random_split_eval, sorted_residuals, EvalOptions, EvalReport, FoldRecord, ModelKind,
};
pub use wasserstein::{amc, assignment, wasserstein_1d, wasserstein_pd};
