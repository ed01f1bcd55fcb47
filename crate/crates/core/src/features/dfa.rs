//! Detrended fluctuation analysis with first-order detrending.

use super::FeatureError;

pub const MIN_BOX: usize = 16;
pub const MIN_BOX_SIZES: usize = 4;

/// Box sizes `16, 32, 64, ..` up to a quarter of the signal length.
pub fn box_sizes(len: usize) -> Vec<usize> {
    std::iter::successors(Some(MIN_BOX), |&n| Some(n * 2)).take_while(|&n| n <= len / 4).collect()
}

/// Root-mean-square residual of the integrated profile after removing a
/// least-squares line from every non-overlapping box of size `n`.
fn fluctuation(profile: &[f64], n: usize) -> f64 {
    let boxes = profile.len() / n;
    let xm = (n as f64 - 1.0) / 2.0;
    let sxx: f64 = (0..n).map(|i| (i as f64 - xm).powi(2)).sum();
    let mut total = 0.0;
    for b in profile.chunks_exact(n).take(boxes) {
        let ym = b.iter().sum::<f64>() / n as f64;
        let sxy: f64 = b.iter().enumerate().map(|(i, y)| (i as f64 - xm) * (y - ym)).sum();
        let slope = sxy / sxx;
        total += b
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let r = y - ym - slope * (i as f64 - xm);
                r * r
            })
            .sum::<f64>();
    }
    (total / (boxes * n) as f64).sqrt()
}

/// Scaling exponent α: slope of `log F(n)` against `log n`.
///
/// Returns `Ok(None)` when the signal has no fluctuation at some scale
/// (e.g. a constant input).
pub fn dfa_exponent(samples: &[f64]) -> Result<Option<f64>, FeatureError> {
    let sizes = box_sizes(samples.len());
    if sizes.len() < MIN_BOX_SIZES {
        return Err(FeatureError::TooShortForDfa { samples: samples.len() });
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let profile: Vec<f64> = samples
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x - mean;
            Some(*acc)
        })
        .collect();
    let mut pts = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let f = fluctuation(&profile, n);
        if !(f > 0.0) || !f.is_finite() {
            return Ok(None);
        }
        pts.push(((n as f64).ln(), f.ln()));
    }
    let k = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - xm) * (x - xm)).sum();
    Ok(Some(sxy / sxx))
}
