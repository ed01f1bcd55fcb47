//! Ranking and threshold metrics. Label 1 is the positive (pathological) class.

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClassInput);
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score.
fn by_score_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann-Whitney via midranks).
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64 * midrank;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: sum of precision times recall increments over the
/// distinct score thresholds, ties handled as one step.
pub fn auc_prc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    let idx = by_score_desc(scores);
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let group_tp = idx[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        tp += group_tp;
        fp += j + 1 - i - group_tp;
        if group_tp > 0 {
            ap += (group_tp as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
        i = j + 1;
    }
    Ok(ap)
}

/// ROC points `(fpr, tpr)` from (0,0) to (1,1), one per distinct score.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check(scores, labels)?;
    let idx = by_score_desc(scores);
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            if labels[k] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        i = j + 1;
    }
    Ok(pts)
}

/// Precision-recall points `(recall, precision)`, one per distinct score.
pub fn pr_points(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (pos, _) = check(scores, labels)?;
    let idx = by_score_desc(scores);
    let mut pts = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            if labels[k] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        pts.push((tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64));
        i = j + 1;
    }
    Ok(pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Threshold metrics; `None` where a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub acc: Option<f64>,
    pub kappa: Option<f64>,
    pub sens: Option<f64>,
    pub spec: Option<f64>,
    pub prec: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

impl Confusion {
    /// Counts with `score >= threshold` predicted positive.
    pub fn at(scores: &[f64], labels: &[u8], threshold: f64) -> Confusion {
        let mut c = Confusion { tp: 0, tn: 0, fp: 0, fn_: 0 };
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn metrics(&self) -> ConfusionMetrics {
        let Confusion { tp, tn, fp, fn_ } = *self;
        let n = self.total();
        let acc = ratio(tp + tn, n);
        let kappa = acc.and_then(|po| {
            let nf = n as f64;
            let pe = ((tp + fp) as f64 * (tp + fn_) as f64 + (fn_ + tn) as f64 * (fp + tn) as f64) / (nf * nf);
            (pe < 1.0).then(|| (po - pe) / (1.0 - pe))
        });
        ConfusionMetrics {
            acc,
            kappa,
            sens: ratio(tp, tp + fn_),
            spec: ratio(tn, tn + fp),
            prec: ratio(tp, tp + fp),
            npv: ratio(tn, tn + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    }
}

/// Candidate thresholds: midpoints of the sorted unique scores, or the only
/// score when all are equal.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = scores.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    if u.len() == 1 {
        return u;
    }
    u.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
}

/// Equal-error-rate threshold: minimizes `|Sens - Spec|`, then prefers higher
/// accuracy, then the lower threshold.
pub fn eer_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    let mut best: Option<(f64, f64, f64)> = None;
    for t in candidate_thresholds(scores) {
        let m = Confusion::at(scores, labels, t).metrics();
        let gap = (m.sens.unwrap_or(0.0) - m.spec.unwrap_or(0.0)).abs();
        let acc = m.acc.unwrap_or(0.0);
        let better = match best {
            None => true,
            // candidates ascend, so equal keys keep the lower threshold
            Some((bg, ba, _)) => gap < bg || (gap == bg && acc > ba),
        };
        if better {
            best = Some((gap, acc, t));
        }
    }
    Ok(best.map(|b| b.2).expect("at least one candidate"))
}
