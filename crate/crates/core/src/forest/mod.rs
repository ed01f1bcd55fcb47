//! Tree ensembles: a probability random forest for the supervised setting and
//! a fair-cut isolation forest for the unsupervised one.
//!
//! Both are trained tree by tree from seeds derived from `(seed, tree_index)`,
//! so the fitted model does not depend on the number of worker threads.

pub mod fcf;
pub mod rf;
pub mod tune;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fcf::{FairCutForest, FcfConfig};
pub use rf::{OobEstimate, RandomForest, RfConfig};
pub use tune::{rf_tune, TuneConfig, TuneOutcome, TuneStrategy};

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training labels contain a single class")]
    SingleClassTrainingSet,
    #[error("need at least {needed} rows, got {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("column mismatch: model expects {expected} columns, input has {found}")]
    ColumnMismatch { expected: usize, found: usize },
    #[error("column names differ from the training columns")]
    ColumnNameMismatch,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ForestError>;

/// Borrowed row-major matrix.
#[derive(Debug, Clone, Copy)]
pub struct DataView<'a> {
    pub data: &'a [f64],
    pub n_cols: usize,
}

impl<'a> DataView<'a> {
    pub fn new(data: &'a [f64], n_cols: usize) -> Self {
        debug_assert!(n_cols > 0 && data.len().is_multiple_of(n_cols));
        DataView { data, n_cols }
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Column-major copy, used by the tree builders.
    pub(crate) fn columns(&self) -> Vec<Vec<f64>> {
        let n = self.n_rows();
        (0..self.n_cols).map(|j| (0..n).map(|i| self.data[i * self.n_cols + j]).collect()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Fcf,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Rf => "RF",
            ModelKind::Fcf => "FCF",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rf" => Ok(ModelKind::Rf),
            "fcf" => Ok(ModelKind::Fcf),
            other => Err(format!("invalid model {other:?}; expected rf or fcf")),
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A fitted model that scores rows to `[0, 1]`, higher meaning pathological
/// (RF) or anomalous (FCF).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    Rf(RandomForest),
    Fcf(FairCutForest),
}

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format_version: u32,
    model: M,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Rf(_) => ModelKind::Rf,
            TrainedModel::Fcf(_) => ModelKind::Fcf,
        }
    }

    pub fn column_names(&self) -> &[String] {
        match self {
            TrainedModel::Rf(m) => &m.column_names,
            TrainedModel::Fcf(m) => &m.column_names,
        }
    }

    pub fn score_rows(&self, rows: DataView<'_>) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Rf(m) => m.predict(rows),
            TrainedModel::Fcf(m) => m.score(rows),
        }
    }

    /// Scores rows after checking their column names against training.
    pub fn score_named(&self, names: &[String], rows: DataView<'_>) -> Result<Vec<f64>> {
        if names.len() != self.column_names().len() {
            return Err(ForestError::ColumnMismatch { expected: self.column_names().len(), found: names.len() });
        }
        if names != self.column_names() {
            return Err(ForestError::ColumnNameMismatch);
        }
        self.score_rows(rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Envelope { format_version: MODEL_FORMAT_VERSION, model: self })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope<TrainedModel> = serde_json::from_str(text)?;
        if env.format_version != MODEL_FORMAT_VERSION {
            return Err(ForestError::UnsupportedVersion(env.format_version));
        }
        Ok(env.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn check_width(expected: usize, rows: &DataView<'_>) -> Result<()> {
    if rows.n_cols != expected {
        return Err(ForestError::ColumnMismatch { expected, found: rows.n_cols });
    }
    Ok(())
}

/// Threshold between two distinct sorted values that sends `lo` left and
/// `hi` right under `x <= t`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = lo + (hi - lo) / 2.0;
    if t >= hi {
        lo
    } else {
        t
    }
}
