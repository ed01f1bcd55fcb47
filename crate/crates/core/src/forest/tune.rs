//! Out-of-bag log-loss tuning of `(mtry, min_node_size)`.
//!
//! A warm-up of random configurations is followed by expected-improvement
//! steps over a Gaussian-process surrogate on log-scaled coordinates.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::rf::{default_mtry, RandomForest, RfConfig};
use super::{DataView, ForestError, Result};
use crate::rng::rng_for;

const LENGTH_SCALE: f64 = 0.25;
const NOISE: f64 = 1e-6;
const EI_XI: f64 = 0.01;
const MAX_GRID_AXIS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneStrategy {
    BayesEi,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub budget: usize,
    pub warmup: usize,
    pub strategy: TuneStrategy,
    /// Trees per trial; `None` uses the base configuration's count.
    pub num_trees: Option<usize>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig { budget: 30, warmup: 19, strategy: TuneStrategy::BayesEi, num_trees: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub mtry: usize,
    pub min_node_size: usize,
    pub log_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: RfConfig,
    pub best_log_loss: f64,
    pub history: Vec<Trial>,
}

struct Space {
    max_mtry: usize,
    max_node: usize,
}

impl Space {
    fn axis(v: usize, max: usize) -> f64 {
        if max <= 1 {
            0.0
        } else {
            (v as f64).ln() / (max as f64).ln()
        }
    }

    fn unaxis(u: f64, max: usize) -> usize {
        if max <= 1 {
            1
        } else {
            ((max as f64).powf(u.clamp(0.0, 1.0)).round() as usize).clamp(1, max)
        }
    }

    fn coords(&self, p: (usize, usize)) -> [f64; 2] {
        [Self::axis(p.0, self.max_mtry), Self::axis(p.1, self.max_node)]
    }

    fn random(&self, rng: &mut impl Rng) -> (usize, usize) {
        (Self::unaxis(rng.gen(), self.max_mtry), Self::unaxis(rng.gen(), self.max_node))
    }

    fn axis_values(max: usize) -> Vec<usize> {
        if max <= MAX_GRID_AXIS {
            (1..=max).collect()
        } else {
            let mut v: Vec<usize> =
                (0..MAX_GRID_AXIS).map(|k| Self::unaxis(k as f64 / (MAX_GRID_AXIS - 1) as f64, max)).collect();
            v.dedup();
            v
        }
    }

    fn grid(&self) -> Vec<(usize, usize)> {
        let ms = Self::axis_values(self.max_mtry);
        let ns = Self::axis_values(self.max_node);
        ms.iter().flat_map(|&m| ns.iter().map(move |&k| (m, k))).collect()
    }
}

/// Tunes `mtry` and `min_node_size` by out-of-bag log-loss; every trial uses
/// the base seed so configurations are compared on the same bootstraps.
pub fn rf_tune(
    rows: DataView<'_>,
    labels: &[u8],
    column_names: &[String],
    base: &RfConfig,
    tune: &TuneConfig,
) -> Result<TuneOutcome> {
    if tune.budget < tune.warmup || tune.warmup < 1 {
        return Err(ForestError::InvalidConfig(format!(
            "tuning needs budget >= warmup >= 1 (budget {}, warmup {})",
            tune.budget, tune.warmup
        )));
    }
    let free = rows.n_cols.saturating_sub(base.always_split.len()).max(1);
    let space = Space { max_mtry: free, max_node: ((labels.len() as f64 * 0.2).ceil() as usize).max(1) };
    let mut trial_cfg = base.clone();
    trial_cfg.trace_candidates = false;
    if let Some(t) = tune.num_trees {
        trial_cfg.num_trees = t;
    }

    let mut cache: HashMap<(usize, usize), f64> = HashMap::new();
    let mut history: Vec<Trial> = Vec::new();
    let mut evaluate = |point: (usize, usize), history: &mut Vec<Trial>| -> Result<()> {
        let ll = match cache.get(&point) {
            Some(&v) => v,
            None => {
                let mut c = trial_cfg.clone();
                c.mtry = Some(point.0);
                c.min_node_size = point.1;
                let v = RandomForest::fit(rows, labels, column_names, &c)?.oob.log_loss;
                cache.insert(point, v);
                v
            }
        };
        log::debug!("tune mtry={} min_node_size={} oob_log_loss={ll:.5}", point.0, point.1);
        history.push(Trial { mtry: point.0, min_node_size: point.1, log_loss: ll });
        Ok(())
    };

    let mut rng = rng_for(base.seed, &[0x7475_6e65]);
    let default_point = (base.mtry.unwrap_or_else(|| default_mtry(free)).clamp(1, free), base.min_node_size.clamp(1, space.max_node));
    evaluate(default_point, &mut history)?;
    while history.len() < tune.warmup {
        let p = space.random(&mut rng);
        evaluate(p, &mut history)?;
    }
    let grid = space.grid();
    while history.len() < tune.budget {
        let next = match tune.strategy {
            TuneStrategy::Random => space.random(&mut rng),
            TuneStrategy::BayesEi => {
                next_by_ei(&space, &grid, &history).unwrap_or_else(|| space.random(&mut rng))
            }
        };
        evaluate(next, &mut history)?;
    }

    let best = history
        .iter()
        .fold(None::<&Trial>, |acc, t| match acc {
            Some(b) if b.log_loss <= t.log_loss => Some(b),
            _ => Some(t),
        })
        .expect("at least one trial");
    let mut cfg = base.clone();
    cfg.mtry = Some(best.mtry);
    cfg.min_node_size = best.min_node_size;
    Ok(TuneOutcome { best: cfg, best_log_loss: best.log_loss, history })
}

fn kernel(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    (-d2 / (2.0 * LENGTH_SCALE * LENGTH_SCALE)).exp()
}

/// Grid point with the largest expected improvement that was not tried yet.
fn next_by_ei(space: &Space, grid: &[(usize, usize)], history: &[Trial]) -> Option<(usize, usize)> {
    // average repeated observations of the same point
    let mut obs: Vec<((usize, usize), f64, usize)> = Vec::new();
    for t in history.iter().filter(|t| t.log_loss.is_finite()) {
        let key = (t.mtry, t.min_node_size);
        match obs.iter_mut().find(|o| o.0 == key) {
            Some(o) => {
                o.1 += t.log_loss;
                o.2 += 1;
            }
            None => obs.push((key, t.log_loss, 1)),
        }
    }
    if obs.is_empty() {
        return None;
    }
    let xs: Vec<[f64; 2]> = obs.iter().map(|o| space.coords(o.0)).collect();
    let ys: Vec<f64> = obs.iter().map(|o| o.1 / o.2 as f64).collect();
    let n = ys.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let z = DVector::from_iterator(n, ys.iter().map(|y| (y - mean) / sd));
    let k = DMatrix::from_fn(n, n, |i, j| kernel(&xs[i], &xs[j]) + if i == j { NOISE } else { 0.0 });
    let chol = k.cholesky()?;
    let alpha = chol.solve(&z);
    let best = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");

    let tried: Vec<(usize, usize)> = obs.iter().map(|o| o.0).collect();
    let mut pick: Option<((usize, usize), f64)> = None;
    for &g in grid {
        if tried.contains(&g) {
            continue;
        }
        let x = space.coords(g);
        let ks = DVector::from_iterator(n, xs.iter().map(|xi| kernel(&x, xi)));
        let mu = ks.dot(&alpha);
        let v = chol.solve(&ks);
        let var = (1.0 - ks.dot(&v)).max(0.0);
        let s = var.sqrt();
        let imp = best - mu - EI_XI;
        let ei = if s < 1e-12 {
            imp.max(0.0)
        } else {
            let u = imp / s;
            imp * normal.cdf(u) + s * normal.pdf(u)
        };
        if pick.is_none_or(|(_, b)| ei > b) {
            pick = Some((g, ei));
        }
    }
    pick.map(|(g, _)| g)
}
