//! Descriptive statistics of per-frame contours.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statistic {
    Mean,
    Std,
    Skewness,
    Kurtosis,
    Min,
    Max,
    Median,
    Iqr,
    VoicedFraction,
}

impl Statistic {
    /// Statistics computed for every frame contour, in registry order.
    pub const CONTOUR: [Statistic; 8] = [
        Statistic::Mean,
        Statistic::Std,
        Statistic::Skewness,
        Statistic::Kurtosis,
        Statistic::Min,
        Statistic::Max,
        Statistic::Median,
        Statistic::Iqr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Std => "std",
            Statistic::Skewness => "skewness",
            Statistic::Kurtosis => "kurtosis",
            Statistic::Min => "min",
            Statistic::Max => "max",
            Statistic::Median => "median",
            Statistic::Iqr => "iqr",
            Statistic::VoicedFraction => "voiced_fraction",
        }
    }
}

/// Summary of one contour. `None` marks a statistic that is undefined for the
/// input (empty contour, fewer than two values for `std`, zero variance for
/// the shape moments).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContourSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub median: Option<f64>,
    pub iqr: Option<f64>,
}

impl ContourSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let (m2, m3, m4) = values.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &x| {
            let d = x - mean;
            let d2 = d * d;
            (a + d2, b + d2 * d, c + d2 * d2)
        });
        let constant = values.iter().all(|&x| x == values[0]);
        let std = (n >= 2).then(|| if constant { 0.0 } else { (m2 / (nf - 1.0)).sqrt() });
        let (skewness, kurtosis) = if constant || n < 2 {
            (None, None)
        } else {
            let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
            (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2) - 3.0))
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&sorted, 0.25);
        let q3 = quantile_sorted(&sorted, 0.75);
        ContourSummary {
            mean: Some(if constant { values[0] } else { mean }),
            std,
            skewness,
            kurtosis,
            min: Some(sorted[0]),
            max: Some(sorted[n - 1]),
            median: Some(quantile_sorted(&sorted, 0.5)),
            iqr: Some(q3 - q1),
        }
    }

    pub fn get(&self, stat: Statistic) -> Option<f64> {
        match stat {
            Statistic::Mean => self.mean,
            Statistic::Std => self.std,
            Statistic::Skewness => self.skewness,
            Statistic::Kurtosis => self.kurtosis,
            Statistic::Min => self.min,
            Statistic::Max => self.max,
            Statistic::Median => self.median,
            Statistic::Iqr => self.iqr,
            Statistic::VoicedFraction => None,
        }
    }
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample (n - 1) standard deviation.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Regression deltas over `±2` frames with edge replication.
pub fn deltas(contour: &[f64]) -> Vec<f64> {
    const N: isize = 2;
    let len = contour.len() as isize;
    let at = |i: isize| contour[i.clamp(0, len - 1) as usize];
    let denom: f64 = 2.0 * (1..=N).map(|n| (n * n) as f64).sum::<f64>();
    (0..len)
        .map(|t| (1..=N).map(|n| n as f64 * (at(t + n) - at(t - n))).sum::<f64>() / denom)
        .collect()
}
