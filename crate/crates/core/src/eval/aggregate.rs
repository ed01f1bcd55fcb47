//! Aggregation of repeats into a report row.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::cv::RunResult;
use super::metrics::{eer_threshold, Confusion, ConfusionMetrics};
use super::{EvalError, Result};

pub const DEFAULT_CONFIDENCE: f64 = 0.90;

/// Mean with the half-width of a normal-approximation confidence interval
/// (absent with fewer than two runs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: Option<f64>,
}

impl Estimate {
    pub fn from_values(values: &[f64], z: f64) -> Estimate {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let half_width = (values.len() >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            z * var.sqrt() / n.sqrt()
        });
        Estimate { mean, half_width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub repeat: usize,
    pub auc_roc: f64,
    pub auc_prc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub n_runs: usize,
    pub confidence: f64,
    pub z: f64,
    pub auc_roc: Estimate,
    pub auc_prc: Estimate,
    pub central_repeat: usize,
    pub threshold: f64,
    pub confusion: Confusion,
    pub metrics: ConfusionMetrics,
    pub runs: Vec<RunSummary>,
}

/// Two-sided normal quantile for `confidence` (1.645 at 0.90).
pub fn z_for(confidence: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

/// Index of the run whose AUC ROC is closest to `mean`; the first on ties.
pub fn central_run(aucs: &[f64], mean: f64) -> usize {
    let mut best = 0;
    for (i, a) in aucs.iter().enumerate() {
        if (a - mean).abs() < (aucs[best] - mean).abs() {
            best = i;
        }
    }
    best
}

pub fn aggregate_runs(model: &str, runs: &[RunResult], confidence: f64) -> Result<MetricReport> {
    if runs.is_empty() {
        return Err(EvalError::NoRuns);
    }
    let z = z_for(confidence);
    let rocs: Vec<f64> = runs.iter().map(|r| r.auc_roc).collect();
    let prcs: Vec<f64> = runs.iter().map(|r| r.auc_prc).collect();
    let auc_roc = Estimate::from_values(&rocs, z);
    let auc_prc = Estimate::from_values(&prcs, z);
    let c = central_run(&rocs, auc_roc.mean);
    let central = &runs[c];
    let (scores, labels) = (central.scores(), central.labels());
    let threshold = eer_threshold(&scores, &labels)?;
    let confusion = Confusion::at(&scores, &labels, threshold);
    Ok(MetricReport {
        model: model.to_string(),
        n_runs: runs.len(),
        confidence,
        z,
        auc_roc,
        auc_prc,
        central_repeat: central.repeat,
        threshold,
        confusion,
        metrics: confusion.metrics(),
        runs: runs.iter().map(|r| RunSummary { repeat: r.repeat, auc_roc: r.auc_roc, auc_prc: r.auc_prc }).collect(),
    })
}
