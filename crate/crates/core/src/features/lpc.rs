//! Linear prediction and formant estimation from LPC polynomial roots.

use nalgebra::DMatrix;

use super::frames::Frames;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormantParams {
    pub count: usize,
    /// Resonances below this frequency are ignored (Hz).
    pub min_hz: f64,
    /// Roots with a wider -3 dB bandwidth are not treated as resonances (Hz).
    pub max_bandwidth_hz: f64,
}

impl Default for FormantParams {
    fn default() -> Self {
        FormantParams { count: 4, min_hz: 90.0, max_bandwidth_hz: 400.0 }
    }
}

/// LPC order for a sample rate: `2 + fs/1000`, raised so that `count`
/// conjugate root pairs remain possible.
pub fn lpc_order(sample_rate: u32, count: usize) -> usize {
    (2 + sample_rate as usize / 1000).max(2 * count + 2)
}

fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|lag| x.iter().zip(&x[lag.min(x.len())..]).map(|(a, b)| a * b).sum())
        .collect()
}

/// Levinson-Durbin recursion. Returns `[1, a1, .., ap]`, or `None` when the
/// autocorrelation is singular or the prediction error collapses.
pub fn lpc(frame: &[f64], order: usize) -> Option<Vec<f64>> {
    if frame.len() <= order {
        return None;
    }
    let r = autocorrelation(frame, order);
    if !(r[0] > 0.0) {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = r[i] + (1..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if !(err > r[0] * 1e-12) {
            return None;
        }
    }
    Some(a)
}

/// Roots of `z^p + a1 z^(p-1) + .. + ap` via companion-matrix eigenvalues.
pub fn polynomial_roots(a: &[f64]) -> Vec<(f64, f64)> {
    let p = a.len() - 1;
    if p == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        m[(0, j)] = -a[j + 1];
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
}

/// Ascending resonance frequencies of one frame; missing formants are `None`.
pub fn frame_formants(frame: &[f64], sample_rate: u32, params: &FormantParams) -> Vec<Option<f64>> {
    let mut out = vec![None; params.count];
    let fs = sample_rate as f64;
    let Some(a) = lpc(frame, lpc_order(sample_rate, params.count)) else {
        return out;
    };
    if a.iter().any(|v| !v.is_finite()) {
        return out;
    }
    let mut freqs: Vec<f64> = polynomial_roots(&a)
        .into_iter()
        .filter(|&(_, im)| im > 0.0)
        .filter_map(|(re, im)| {
            let radius = re.hypot(im);
            let freq = im.atan2(re) * fs / (2.0 * std::f64::consts::PI);
            let bandwidth = -radius.ln() * fs / std::f64::consts::PI;
            (radius < 1.0
                && freq > params.min_hz
                && freq < fs / 2.0
                && bandwidth < params.max_bandwidth_hz)
                .then_some(freq)
        })
        .collect();
    freqs.sort_by(f64::total_cmp);
    for (slot, f) in out.iter_mut().zip(freqs) {
        *slot = Some(f);
    }
    out
}

/// Per-frame formants `F1..Fcount`.
pub fn formants(frames: &Frames, sample_rate: u32, params: &FormantParams) -> Vec<Vec<Option<f64>>> {
    frames.iter().map(|f| frame_formants(f, sample_rate, params)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::frames::{frame_signal, WindowFn};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()
    }

    /// White noise through a two-pole resonator with poles at `±2π f/fs`.
    fn resonator(f: f64, radius: f64, n: usize, seed: u64) -> Vec<f64> {
        let theta = 2.0 * std::f64::consts::PI * f / 4000.0;
        let (a1, a2) = (2.0 * radius * theta.cos(), -radius * radius);
        let e = noise(n, seed);
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = e[i] + if i >= 1 { a1 * y[i - 1] } else { 0.0 } + if i >= 2 { a2 * y[i - 2] } else { 0.0 };
        }
        y
    }

    fn median_f1(x: &[f64]) -> f64 {
        let frames = frame_signal(x, 400, 200, WindowFn::Hann).unwrap();
        let mut f1: Vec<f64> = formants(&frames, 4000, &FormantParams::default()).iter().filter_map(|f| f[0]).collect();
        f1.sort_by(f64::total_cmp);
        crate::features::stats::quantile_sorted(&f1, 0.5)
    }

    #[test]
    fn levinson_recovers_ar2() {
        let y = resonator(500.0, 0.95, 40_000, 1);
        let a = lpc(&y, 2).unwrap();
        let theta = 2.0 * std::f64::consts::PI * 500.0 / 4000.0;
        assert!((a[1] + 2.0 * 0.95 * theta.cos()).abs() < 0.02, "{a:?}");
        assert!((a[2] - 0.95 * 0.95).abs() < 0.02, "{a:?}");
    }

    #[test]
    fn resonator_first_formant() {
        for seed in 0..20 {
            let f1 = median_f1(&resonator(500.0, 0.97, 20_000, seed));
            assert!((f1 - 500.0).abs() <= 25.0, "seed {seed}: {f1}");
        }
    }

    #[test]
    fn silence_is_masked() {
        let frames = frame_signal(&[0.0; 2000], 400, 200, WindowFn::Hann).unwrap();
        assert!(formants(&frames, 4000, &FormantParams::default()).iter().flatten().all(Option::is_none));
    }

    #[test]
    fn white_noise_gives_four_in_band_means() {
        for seed in 0..10 {
            let frames = frame_signal(&noise(20_000, seed), 400, 200, WindowFn::Hann).unwrap();
            let per_frame = formants(&frames, 4000, &FormantParams::default());
            for k in 0..4 {
                let v: Vec<f64> = per_frame.iter().filter_map(|f| f[k]).collect();
                assert!(!v.is_empty(), "seed {seed} formant {k}");
                let m = v.iter().sum::<f64>() / v.len() as f64;
                assert!(m > 0.0 && m < 2000.0);
            }
        }
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (z - 0.5)(z + 0.25) = z^2 - 0.25 z - 0.125
        let mut r = polynomial_roots(&[1.0, -0.25, -0.125]);
        r.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((r[0].0 + 0.25).abs() < 1e-12 && (r[1].0 - 0.5).abs() < 1e-12);
    }
}
