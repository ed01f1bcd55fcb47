//! Cross-validation with its metrics.

pub mod aggregate;
pub mod cv;
pub mod folds;
pub mod metrics;

use thiserror::Error;

pub use aggregate::{aggregate_runs, Estimate, MetricReport};
pub use cv::{fold_rows, run_cv, ModelSpec, RunResult};
pub use folds::{make_folds, FoldPlan};
pub use metrics::{auc_prc, auc_roc, eer_threshold, Confusion, ConfusionMetrics};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot split {subjects} subjects into {k} folds")]
    TooFewSubjectsForK { k: usize, subjects: usize },
    #[error("metric needs both classes present")]
    SingleClassInput,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("subject {0} is not covered by the fold plan")]
    SubjectNotInPlan(String),
    #[error("dataset contains missing values; impute them first")]
    MissingValues,
    #[error("no runs to aggregate")]
    NoRuns,
    #[error(transparent)]
    Forest(#[from] crate::forest::ForestError),
    #[error(transparent)]
    Fusion(#[from] crate::fusion::FusionError),
}

pub type Result<T> = std::result::Result<T, EvalError>;
