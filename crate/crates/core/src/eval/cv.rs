//! Repeated subject-grouped cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::metrics::{auc_prc, auc_roc};
use super::{EvalError, Result};
use crate::dataset::Dataset;
use crate::forest::{rf_tune, DataView, FairCutForest, FcfConfig, RandomForest, RfConfig, TuneConfig};
use crate::fusion::{fuse, FusionScope, Prediction};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Rf { config: RfConfig, tune: Option<TuneConfig> },
    Fcf { config: FcfConfig },
}

/// Pooled predictions of one repeat, after optional fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub repeat: usize,
    pub predictions: Vec<Prediction>,
    pub auc_roc: f64,
    pub auc_prc: f64,
}

impl RunResult {
    pub fn scores(&self) -> Vec<f64> {
        self.predictions.iter().map(|p| p.score).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.predictions.iter().map(|p| p.label).collect()
    }
}

/// Training and test row indices of one `(repeat, fold)`.
pub fn fold_rows(ds: &Dataset, plan: &FoldPlan, repeat: usize, fold: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, m) in ds.row_meta.iter().enumerate() {
        let f = plan.fold_of(repeat, &m.subject).ok_or_else(|| EvalError::SubjectNotInPlan(m.subject.clone()))?;
        if f == fold {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    Ok((train, test))
}

fn gather(ds: &Dataset, rows: &[usize]) -> Vec<f64> {
    rows.iter().flat_map(|&i| ds.row(i).iter().copied()).collect()
}

fn fit_and_score(ds: &Dataset, train: &[usize], test: &[usize], model: &ModelSpec, seed: u64) -> Result<Vec<f64>> {
    let p = ds.n_cols();
    let xtr = gather(ds, train);
    let xte = gather(ds, test);
    let scores = match model {
        ModelSpec::Rf { config, tune } => {
            let ytr: Vec<u8> = train.iter().map(|&i| ds.labels[i]).collect();
            let mut cfg = config.clone();
            cfg.seed = seed;
            if let Some(t) = tune {
                cfg = rf_tune(DataView::new(&xtr, p), &ytr, &ds.column_names, &cfg, t)?.best;
            }
            RandomForest::fit(DataView::new(&xtr, p), &ytr, &ds.column_names, &cfg)?.predict(DataView::new(&xte, p))?
        }
        ModelSpec::Fcf { config } => {
            let mut cfg = config.clone();
            cfg.seed = seed;
            FairCutForest::fit(DataView::new(&xtr, p), &ds.column_names, &cfg)?.score(DataView::new(&xte, p))?
        }
    };
    Ok(scores)
}

/// Fits on the training folds and scores the held-out fold for every
/// `(repeat, fold)`, pools each repeat's predictions, fuses them when a
/// scope is given and computes the ranking metrics.
pub fn run_cv(ds: &Dataset, plan: &FoldPlan, model: &ModelSpec, fusion: Option<FusionScope>) -> Result<Vec<RunResult>> {
    if ds.has_missing() {
        return Err(EvalError::MissingValues);
    }
    let base_seed = match model {
        ModelSpec::Rf { config, .. } => config.seed,
        ModelSpec::Fcf { config } => config.seed,
    };
    let tasks: Vec<(usize, usize)> = (0..plan.repeats).flat_map(|r| (0..plan.k).map(move |f| (r, f))).collect();
    let per_task: Vec<Vec<Prediction>> = tasks
        .par_iter()
        .map(|&(r, f)| -> Result<Vec<Prediction>> {
            let (train, test) = fold_rows(ds, plan, r, f)?;
            if test.is_empty() {
                return Ok(Vec::new());
            }
            let scores = fit_and_score(ds, &train, &test, model, derive_seed(base_seed, &[r as u64, f as u64]))?;
            Ok(test
                .iter()
                .zip(scores)
                .map(|(&i, score)| {
                    let m = &ds.row_meta[i];
                    Prediction {
                        repeat: r,
                        fold: f,
                        row_id: i,
                        subject: m.subject.clone(),
                        side: m.side,
                        level: m.level,
                        channel: m.channel,
                        window: m.window,
                        score,
                        label: ds.labels[i],
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut runs = Vec::with_capacity(plan.repeats);
    for r in 0..plan.repeats {
        let mut pooled: Vec<Prediction> =
            per_task[r * plan.k..(r + 1) * plan.k].iter().flatten().cloned().collect();
        pooled.sort_by_key(|p| p.row_id);
        let predictions = match fusion {
            Some(scope) => fuse(&pooled, scope)?,
            None => pooled,
        };
        let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
        let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
        runs.push(RunResult { repeat: r, auc_roc: auc_roc(&scores, &labels)?, auc_prc: auc_prc(&scores, &labels)?, predictions });
    }
    Ok(runs)
}
