//! Probability random forest with Gini splits and always-split columns.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_width, midpoint, DataView, ForestError, Result};
use crate::rng::{derive_seed, rng_for};

const LOG_LOSS_CLIP: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfConfig {
    pub num_trees: usize,
    /// Candidate columns per node; `None` means `floor(sqrt(p))` over the
    /// columns that are not always split.
    pub mtry: Option<usize>,
    /// Minimum number of bootstrap rows in a leaf.
    pub min_node_size: usize,
    pub always_split: Vec<String>,
    pub seed: u64,
    /// Record the candidate set of every split node (for introspection).
    #[serde(default)]
    pub trace_candidates: bool,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            num_trees: 500,
            mtry: None,
            min_node_size: 1,
            always_split: Vec::new(),
            seed: 0,
            trace_candidates: false,
        }
    }
}

impl RfConfig {
    /// Number of free (not always-split) columns and the effective mtry.
    pub fn resolve_mtry(&self, n_cols: usize) -> Result<usize> {
        let free = n_cols.saturating_sub(self.always_split.len());
        let m = match self.mtry {
            Some(m) => m,
            None => default_mtry(free),
        };
        if m < 1 || m > free.max(1) || m > n_cols {
            return Err(ForestError::InvalidConfig(format!("mtry {m} outside 1..={free}")));
        }
        Ok(m)
    }
}

pub fn default_mtry(free_cols: usize) -> usize {
    ((free_cols as f64).sqrt().floor() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum RfNode {
    Split {
        col: u32,
        threshold: f64,
        left: u32,
        right: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        candidates: Option<Vec<u32>>,
    },
    Leaf {
        prob: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfTree {
    pub nodes: Vec<RfNode>,
}

impl RfTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                RfNode::Leaf { prob } => return *prob,
                RfNode::Split { col, threshold, left, right, .. } => {
                    i = if row[*col as usize] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn split_nodes(&self) -> impl Iterator<Item = &RfNode> {
        self.nodes.iter().filter(|n| matches!(n, RfNode::Split { .. }))
    }
}

/// Out-of-bag estimate computed at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OobEstimate {
    /// Per-row mean over trees whose bootstrap excluded the row.
    pub scores: Vec<Option<f64>>,
    pub log_loss: f64,
    pub accuracy: f64,
    pub n_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: RfConfig,
    pub column_names: Vec<String>,
    pub trees: Vec<RfTree>,
    pub oob: OobEstimate,
}

impl RandomForest {
    pub fn fit(rows: DataView<'_>, labels: &[u8], column_names: &[String], cfg: &RfConfig) -> Result<Self> {
        let n = rows.n_rows();
        let p = rows.n_cols;
        if column_names.len() != p {
            return Err(ForestError::ColumnMismatch { expected: p, found: column_names.len() });
        }
        if labels.len() != n {
            return Err(ForestError::InvalidConfig(format!("{} labels for {n} rows", labels.len())));
        }
        let n_pos = labels.iter().filter(|&&l| l == 1).count();
        if n_pos == 0 || n_pos == n {
            return Err(ForestError::SingleClassTrainingSet);
        }
        if cfg.num_trees == 0 {
            return Err(ForestError::InvalidConfig("num_trees must be positive".into()));
        }
        if cfg.min_node_size == 0 {
            return Err(ForestError::InvalidConfig("min_node_size must be at least 1".into()));
        }
        let mut always = Vec::with_capacity(cfg.always_split.len());
        for name in &cfg.always_split {
            match column_names.iter().position(|c| c == name) {
                Some(j) if !always.contains(&j) => always.push(j),
                Some(_) => {}
                None => return Err(ForestError::InvalidConfig(format!("always-split column {name:?} not found"))),
            }
        }
        let free: Vec<usize> = (0..p).filter(|j| !always.contains(j)).collect();
        let mtry = if free.is_empty() { 0 } else { cfg.resolve_mtry(p)? };

        let cols = rows.columns();
        let ctx = BuildCtx {
            cols: &cols,
            labels,
            free: &free,
            always: &always,
            mtry,
            min_node_size: cfg.min_node_size,
            trace: cfg.trace_candidates,
        };
        let grown: Vec<(RfTree, Vec<u32>)> = (0..cfg.num_trees)
            .into_par_iter()
            .map(|t| ctx.grow(derive_seed(cfg.seed, &[t as u64])))
            .collect();

        let mut sum = vec![0.0; n];
        let mut cnt = vec![0usize; n];
        for (tree, in_bag) in &grown {
            for i in 0..n {
                if in_bag[i] == 0 {
                    sum[i] += tree.predict(rows.row(i));
                    cnt[i] += 1;
                }
            }
        }
        let scores: Vec<Option<f64>> =
            (0..n).map(|i| if cnt[i] > 0 { Some(sum[i] / cnt[i] as f64) } else { None }).collect();
        let oob = oob_summary(&scores, labels);
        Ok(RandomForest {
            config: cfg.clone(),
            column_names: column_names.to_vec(),
            trees: grown.into_iter().map(|(t, _)| t).collect(),
            oob,
        })
    }

    pub fn predict(&self, rows: DataView<'_>) -> Result<Vec<f64>> {
        check_width(self.column_names.len(), &rows)?;
        let k = self.trees.len() as f64;
        Ok((0..rows.n_rows())
            .into_par_iter()
            .map(|i| {
                let row = rows.row(i);
                self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / k
            })
            .collect())
    }
}

fn oob_summary(scores: &[Option<f64>], labels: &[u8]) -> OobEstimate {
    let mut ll = 0.0;
    let mut correct = 0usize;
    let mut m = 0usize;
    for (s, &y) in scores.iter().zip(labels) {
        if let Some(p) = s {
            let pc = p.clamp(LOG_LOSS_CLIP, 1.0 - LOG_LOSS_CLIP);
            ll -= if y == 1 { pc.ln() } else { (1.0 - pc).ln() };
            if (*p >= 0.5) == (y == 1) {
                correct += 1;
            }
            m += 1;
        }
    }
    let (log_loss, accuracy) = if m == 0 { (f64::INFINITY, 0.0) } else { (ll / m as f64, correct as f64 / m as f64) };
    OobEstimate { scores: scores.to_vec(), log_loss, accuracy, n_scored: m }
}

struct BuildCtx<'a> {
    cols: &'a [Vec<f64>],
    labels: &'a [u8],
    free: &'a [usize],
    always: &'a [usize],
    mtry: usize,
    min_node_size: usize,
    trace: bool,
}

struct BestSplit {
    col: usize,
    threshold: f64,
    decrease: f64,
}

impl BuildCtx<'_> {
    /// Grows one tree; returns it with the per-row in-bag counts.
    fn grow(&self, seed: u64) -> (RfTree, Vec<u32>) {
        let n = self.labels.len();
        let mut rng = rng_for(seed, &[]);
        let mut in_bag = vec![0u32; n];
        let mut sample = Vec::with_capacity(n);
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            in_bag[i] += 1;
            sample.push(i);
        }
        let mut nodes: Vec<RfNode> = vec![RfNode::Leaf { prob: 0.0 }];
        let mut stack = vec![(0usize, sample)];
        let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(n);
        while let Some((slot, idx)) = stack.pop() {
            let pos = idx.iter().filter(|&&i| self.labels[i] == 1).count();
            let prob = pos as f64 / idx.len() as f64;
            if pos == 0 || pos == idx.len() || idx.len() < 2 * self.min_node_size {
                nodes[slot] = RfNode::Leaf { prob };
                continue;
            }
            let mut candidates: Vec<usize> = if self.mtry > 0 {
                sample_indices(&mut rng, self.free.len(), self.mtry).into_iter().map(|k| self.free[k]).collect()
            } else {
                Vec::new()
            };
            candidates.extend_from_slice(self.always);
            let best = self.best_split(&idx, pos, &candidates, &mut pairs);
            match best {
                Some(b) if b.decrease > 0.0 => {
                    let col = &self.cols[b.col];
                    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| col[i] <= b.threshold);
                    let li = nodes.len();
                    nodes.push(RfNode::Leaf { prob: 0.0 });
                    nodes.push(RfNode::Leaf { prob: 0.0 });
                    nodes[slot] = RfNode::Split {
                        col: b.col as u32,
                        threshold: b.threshold,
                        left: li as u32,
                        right: (li + 1) as u32,
                        candidates: self.trace.then(|| candidates.iter().map(|&c| c as u32).collect()),
                    };
                    stack.push((li + 1, r));
                    stack.push((li, l));
                }
                _ => nodes[slot] = RfNode::Leaf { prob },
            }
        }
        (RfTree { nodes }, in_bag)
    }

    fn best_split(&self, idx: &[usize], pos: usize, candidates: &[usize], pairs: &mut Vec<(f64, u8)>) -> Option<BestSplit> {
        let n = idx.len();
        let nf = n as f64;
        let parent = gini_weighted(pos as f64, nf);
        let mut best: Option<BestSplit> = None;
        for &c in candidates {
            let col = &self.cols[c];
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (col[i], self.labels[i])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0usize;
            for k in 0..n - 1 {
                left_pos += pairs[k].1 as usize;
                let nl = k + 1;
                if pairs[k].0 == pairs[k + 1].0 || nl < self.min_node_size || n - nl < self.min_node_size {
                    continue;
                }
                let child = gini_weighted(left_pos as f64, nl as f64)
                    + gini_weighted((pos - left_pos) as f64, (n - nl) as f64);
                let decrease = (parent - child) / nf;
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    best = Some(BestSplit { col: c, threshold: midpoint(pairs[k].0, pairs[k + 1].0), decrease });
                }
            }
        }
        best
    }
}

/// `n * gini` for a node with `pos` positives out of `n`.
fn gini_weighted(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    n * 2.0 * p * (1.0 - p)
}
