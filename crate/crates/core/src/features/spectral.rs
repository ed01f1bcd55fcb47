//! Power spectra, mel filterbank, MFCC and loudness.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::frames::Frames;
use super::stats::ContourSummary;

pub const MEL_BANDS: usize = 26;
pub const MFCC_COEFFS: usize = 13;
/// Floor added before taking logarithms of energies.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale spanning `0..fs/2`, as `n_bands`
/// rows over `n_fft / 2 + 1` power-spectrum bins.
pub fn mel_filterbank(n_bands: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let fmax = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(fmax);
    let edges: Vec<f64> = (0..n_bands + 2).map(|i| mel_to_hz(mel_max * i as f64 / (n_bands + 1) as f64)).collect();
    let bin_hz = |k: usize| k as f64 * sample_rate as f64 / n_fft as f64;
    (0..n_bands)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = bin_hz(k);
                    if f > lo && f < mid {
                        (f - lo) / (mid - lo)
                    } else if f >= mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II matrix, `n_out` rows over `n_in` inputs.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    let n = n_in as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..n_in)
                .map(|i| scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .collect()
        })
        .collect()
}

/// Reusable FFT plan and filterbank for one frame length and sample rate.
pub struct SpectralAnalyzer {
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
    filterbank: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
}

impl SpectralAnalyzer {
    pub fn new(frame_len: usize, sample_rate: u32) -> Self {
        let n_fft = frame_len.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        SpectralAnalyzer {
            n_fft,
            fft,
            filterbank: mel_filterbank(MEL_BANDS, n_fft, sample_rate),
            dct: dct_matrix(MFCC_COEFFS, MEL_BANDS),
        }
    }

    /// `|X_k|^2 / n_fft` for `k = 0..=n_fft/2` of a zero-padded frame.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
        buf.resize(self.n_fft, Complex::new(0.0, 0.0));
        self.fft.process(&mut buf);
        buf[..self.n_fft / 2 + 1].iter().map(|c| c.norm_sqr() / self.n_fft as f64).collect()
    }

    pub fn mfcc_frame(&self, power: &[f64]) -> Vec<f64> {
        let log_mel: Vec<f64> = self
            .filterbank
            .iter()
            .map(|w| (w.iter().zip(power).map(|(a, b)| a * b).sum::<f64>() + LOG_FLOOR).ln())
            .collect();
        self.dct.iter().map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Per-frame spectral contours needed by the registry.
pub struct SpectralContours {
    /// `mfcc[c][t]`: coefficient `c` at frame `t`.
    pub mfcc: Vec<Vec<f64>>,
    pub loudness: Vec<f64>,
}

pub fn spectral_contours(frames: &Frames, analyzer: &SpectralAnalyzer) -> SpectralContours {
    let mut mfcc: Vec<Vec<f64>> = (0..MFCC_COEFFS).map(|_| Vec::with_capacity(frames.count())).collect();
    let mut loudness = Vec::with_capacity(frames.count());
    for frame in frames.iter() {
        let power = analyzer.power_spectrum(frame);
        loudness.push(power.iter().sum::<f64>().powf(0.25));
        for (c, v) in analyzer.mfcc_frame(&power).into_iter().enumerate() {
            mfcc[c].push(v);
        }
    }
    SpectralContours { mfcc, loudness }
}

/// Per-coefficient statistics of the MFCC contours.
pub fn mfcc_stats(frames: &Frames, analyzer: &SpectralAnalyzer) -> Vec<ContourSummary> {
    spectral_contours(frames, analyzer).mfcc.iter().map(|c| ContourSummary::of(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::frames::{frame_signal, WindowFn};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn frames_of(x: &[f64]) -> Frames {
        frame_signal(x, 400, 200, WindowFn::Hann).unwrap()
    }

    #[test]
    fn filterbank_covers_band() {
        let fb = mel_filterbank(26, 512, 4000);
        assert_eq!(fb.len(), 26);
        // every interior bin is covered by some filter
        for k in 1..256 {
            assert!(fb.iter().any(|w| w[k] > 0.0), "bin {k}");
        }
        for w in &fb {
            assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        let d = dct_matrix(26, 26);
        for i in 0..26 {
            for j in 0..26 {
                let dot: f64 = d[i].iter().zip(&d[j]).map(|(a, b)| a * b).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_frames_have_zero_std() {
        let an = SpectralAnalyzer::new(400, 4000);
        let stats = mfcc_stats(&frames_of(&[0.0; 4000]), &an);
        assert!(stats.iter().all(|s| s.std == Some(0.0)));
    }

    #[test]
    fn gain_shifts_only_c0() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..8000).map(|_| 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
        let g = 1.7;
        let y: Vec<f64> = x.iter().map(|v| v * g).collect();
        let an = SpectralAnalyzer::new(400, 4000);
        let a = mfcc_stats(&frames_of(&x), &an);
        let b = mfcc_stats(&frames_of(&y), &an);
        let expected_c0 = (g * g).ln() * (MEL_BANDS as f64).sqrt();
        assert!((b[0].mean.unwrap() - a[0].mean.unwrap() - expected_c0).abs() < 1e-6);
        for c in 1..MFCC_COEFFS {
            assert!((a[c].mean.unwrap() - b[c].mean.unwrap()).abs() < 1e-6, "c{c}");
        }
    }

    #[test]
    fn sine_and_noise_differ_in_c1() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let noise: Vec<f64> = (0..8000).map(|_| 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
        let sine: Vec<f64> =
            (0..8000).map(|i| (2.0 * std::f64::consts::PI * 200.0 * i as f64 / 4000.0).sin()).collect();
        let an = SpectralAnalyzer::new(400, 4000);
        let a = mfcc_stats(&frames_of(&noise), &an)[1].mean.unwrap();
        let b = mfcc_stats(&frames_of(&sine), &an)[1].mean.unwrap();
        assert!((a - b).abs() > 1.0, "{a} {b}");
    }
}
