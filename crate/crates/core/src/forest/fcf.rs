//! Fair-cut isolation forest.
//!
//! Each split projects the node rows onto a random direction spanned by up to
//! `ndim` columns and cuts the projection either where the pooled standard
//! deviation gain is largest or at a uniform random point.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_width, midpoint, DataView, ForestError, Result};
use crate::rng::{derive_seed, rng_for, DetRng};

/// Node sizes above this use quantile candidates instead of every gap.
const EXHAUSTIVE_LIMIT: usize = 1024;
const QUANTILE_CANDIDATES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcfConfig {
    pub num_trees: usize,
    pub ndim: usize,
    pub pick_pooled_gain: f64,
    /// Rows subsampled per tree; `None` uses every row.
    pub sample_size: Option<usize>,
    /// `None` means `2 * ceil(log2(sample_size))`.
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for FcfConfig {
    fn default() -> Self {
        FcfConfig { num_trees: 500, ndim: 3, pick_pooled_gain: 1.0, sample_size: None, max_depth: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum FcfNode {
    Split { cols: Vec<u32>, coefs: Vec<f64>, threshold: f64, left: u32, right: u32 },
    Leaf { size: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcfTree {
    pub nodes: Vec<FcfNode>,
}

impl FcfTree {
    /// Path length of `row`, including the `c(size)` credit at the leaf.
    pub fn path_length(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        let mut depth = 0usize;
        loop {
            match &self.nodes[i] {
                FcfNode::Leaf { size } => return depth as f64 + avg_path_length(*size as usize),
                FcfNode::Split { cols, coefs, threshold, left, right } => {
                    let z = project(row, cols, coefs);
                    i = if z <= *threshold { *left } else { *right } as usize;
                    depth += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairCutForest {
    pub config: FcfConfig,
    pub column_names: Vec<String>,
    pub sample_size: usize,
    pub trees: Vec<FcfTree>,
}

fn project(row: &[f64], cols: &[u32], coefs: &[f64]) -> f64 {
    cols.iter().zip(coefs).map(|(&c, &a)| a * row[c as usize]).sum()
}

/// Harmonic number `H(m)`.
pub fn harmonic(m: usize) -> f64 {
    if m <= 50_000 {
        (1..=m).map(|k| 1.0 / k as f64).sum()
    } else {
        let x = m as f64;
        x.ln() + 0.577_215_664_901_532_9 + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x)
    }
}

/// Average unsuccessful-search path length `c(m) = 2H(m-1) - 2(m-1)/m`.
pub fn avg_path_length(m: usize) -> f64 {
    if m <= 1 {
        return 0.0;
    }
    let mf = m as f64;
    2.0 * harmonic(m - 1) - 2.0 * (mf - 1.0) / mf
}

/// Anomaly score for an expected path length under subsample size `psi`.
pub fn anomaly_score(expected_path: f64, psi: usize) -> f64 {
    let c = avg_path_length(psi);
    if c <= 0.0 {
        return 0.5;
    }
    2f64.powf(-expected_path / c)
}

/// Best pooled-gain threshold for sorted projections, or `None` when all
/// values are equal.
pub fn pooled_gain_threshold(sorted: &[f64]) -> Option<(f64, f64)> {
    let n = sorted.len();
    if n < 2 || sorted[0] == sorted[n - 1] {
        return None;
    }
    let mut s1 = Vec::with_capacity(n + 1);
    let mut s2 = Vec::with_capacity(n + 1);
    s1.push(0.0);
    s2.push(0.0);
    // center to keep the running sums well conditioned
    let shift = sorted[n / 2];
    for &v in sorted {
        let d = v - shift;
        s1.push(s1.last().unwrap() + d);
        s2.push(s2.last().unwrap() + d * d);
    }
    let pop_sd = |a: usize, b: usize| -> f64 {
        let m = (b - a) as f64;
        let mean = (s1[b] - s1[a]) / m;
        ((s2[b] - s2[a]) / m - mean * mean).max(0.0).sqrt()
    };
    let sd_all = pop_sd(0, n);
    let nf = n as f64;
    let mut best: Option<(f64, f64)> = None;
    let consider = |k: usize, best: &mut Option<(f64, f64)>| {
        if sorted[k] == sorted[k + 1] {
            return;
        }
        let nl = k + 1;
        let g = sd_all - (nl as f64 * pop_sd(0, nl) + (n - nl) as f64 * pop_sd(nl, n)) / nf;
        if best.is_none_or(|(bg, _)| g > bg) {
            *best = Some((g, midpoint(sorted[k], sorted[k + 1])));
        }
    };
    if n <= EXHAUSTIVE_LIMIT {
        for k in 0..n - 1 {
            consider(k, &mut best);
        }
    } else {
        for q in 1..=QUANTILE_CANDIDATES {
            let k = q * (n - 1) / (QUANTILE_CANDIDATES + 1);
            // slide to the next gap so every candidate is a real cut
            let mut kk = k;
            while kk + 1 < n && sorted[kk] == sorted[kk + 1] {
                kk += 1;
            }
            if kk + 1 < n {
                consider(kk, &mut best);
            }
        }
        if best.is_none() {
            for k in 0..n - 1 {
                consider(k, &mut best);
            }
        }
    }
    best.map(|(g, t)| (t, g))
}

impl FairCutForest {
    pub fn fit(rows: DataView<'_>, column_names: &[String], cfg: &FcfConfig) -> Result<Self> {
        let n = rows.n_rows();
        if column_names.len() != rows.n_cols {
            return Err(ForestError::ColumnMismatch { expected: rows.n_cols, found: column_names.len() });
        }
        if n < 2 {
            return Err(ForestError::TooFewRows { needed: 2, found: n });
        }
        if cfg.ndim < 1 {
            return Err(ForestError::InvalidConfig("ndim must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&cfg.pick_pooled_gain) {
            return Err(ForestError::InvalidConfig("pick_pooled_gain must lie in [0, 1]".into()));
        }
        if cfg.num_trees == 0 {
            return Err(ForestError::InvalidConfig("num_trees must be positive".into()));
        }
        let psi = cfg.sample_size.unwrap_or(n).clamp(2, n);
        let max_depth = cfg.max_depth.unwrap_or(2 * (psi as f64).log2().ceil() as usize).max(1);
        let cols = rows.columns();
        let trees = (0..cfg.num_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_for(derive_seed(cfg.seed, &[t as u64]), &[]);
                let idx: Vec<usize> = if psi == n {
                    (0..n).collect()
                } else {
                    rand::seq::index::sample(&mut rng, n, psi).into_vec()
                };
                grow(&cols, idx, cfg, max_depth, &mut rng)
            })
            .collect();
        Ok(FairCutForest { config: cfg.clone(), column_names: column_names.to_vec(), sample_size: psi, trees })
    }

    pub fn expected_path_length(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn score(&self, rows: DataView<'_>) -> Result<Vec<f64>> {
        check_width(self.column_names.len(), &rows)?;
        Ok((0..rows.n_rows())
            .into_par_iter()
            .map(|i| anomaly_score(self.expected_path_length(rows.row(i)), self.sample_size))
            .collect())
    }
}

fn grow(cols: &[Vec<f64>], idx: Vec<usize>, cfg: &FcfConfig, max_depth: usize, rng: &mut DetRng) -> FcfTree {
    let p = cols.len();
    let mut nodes = vec![FcfNode::Leaf { size: 0 }];
    let mut stack = vec![(0usize, idx, 0usize)];
    let mut order: Vec<usize> = (0..p).collect();
    while let Some((slot, idx, depth)) = stack.pop() {
        let leaf = FcfNode::Leaf { size: idx.len() as u32 };
        if idx.len() <= 1 || depth >= max_depth {
            nodes[slot] = leaf;
            continue;
        }
        // columns without replacement, skipping the ones constant in this node
        order.shuffle(rng);
        let mut chosen = Vec::with_capacity(cfg.ndim);
        let mut coefs = Vec::with_capacity(cfg.ndim);
        for &c in &order {
            if chosen.len() == cfg.ndim {
                break;
            }
            let col = &cols[c];
            let m = idx.len() as f64;
            let mean = idx.iter().map(|&i| col[i]).sum::<f64>() / m;
            let var = idx.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / m;
            if var > 0.0 && var.is_finite() {
                let z: f64 = Distribution::<f64>::sample(&StandardNormal, rng);
                chosen.push(c as u32);
                coefs.push(z / var.sqrt());
            }
        }
        if chosen.is_empty() {
            nodes[slot] = leaf;
            continue;
        }
        let proj: Vec<f64> = idx.iter().map(|&i| chosen.iter().zip(&coefs).map(|(&c, &a)| a * cols[c as usize][i]).sum()).collect();
        let mut sorted = proj.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        if lo == hi {
            nodes[slot] = leaf;
            continue;
        }
        let use_gain = cfg.pick_pooled_gain >= 1.0 || rng.gen::<f64>() < cfg.pick_pooled_gain;
        let threshold = if use_gain {
            pooled_gain_threshold(&sorted).map(|(t, _)| t).unwrap_or(lo)
        } else {
            let t = rng.gen_range(lo..hi);
            // keep at least one row on each side
            if t >= hi {
                lo
            } else {
                t
            }
        };
        let mut l = Vec::new();
        let mut r = Vec::new();
        for (k, &i) in idx.iter().enumerate() {
            if proj[k] <= threshold {
                l.push(i);
            } else {
                r.push(i);
            }
        }
        let li = nodes.len();
        nodes.push(FcfNode::Leaf { size: 0 });
        nodes.push(FcfNode::Leaf { size: 0 });
        nodes[slot] = FcfNode::Split { cols: chosen, coefs, threshold, left: li as u32, right: li as u32 + 1 };
        stack.push((li + 1, r, depth + 1));
        stack.push((li, l, depth + 1));
    }
    FcfTree { nodes }
}
