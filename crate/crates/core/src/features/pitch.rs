//! Autocorrelation pitch tracking and harmonics-to-noise ratio.

use super::frames::Frames;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchParams {
    pub min_hz: f64,
    pub max_hz: f64,
    /// Minimum normalized autocorrelation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Local maxima within this fraction of the best peak are preferred
    /// when they sit at a shorter lag (guards against octave errors).
    pub octave_tolerance: f64,
}

impl Default for PitchParams {
    fn default() -> Self {
        PitchParams { min_hz: 50.0, max_hz: 800.0, voicing_threshold: 0.45, octave_tolerance: 0.95 }
    }
}

/// Per-frame pitch estimate. `None` marks an unvoiced frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    pub f0: Vec<Option<f64>>,
    /// Normalized autocorrelation at the chosen lag, for voiced frames.
    pub strength: Vec<Option<f64>>,
}

impl PitchContour {
    pub fn voiced(&self) -> Vec<f64> {
        self.f0.iter().flatten().copied().collect()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.f0.is_empty() {
            return 0.0;
        }
        self.f0.iter().filter(|f| f.is_some()).count() as f64 / self.f0.len() as f64
    }
}

/// Normalized autocorrelation over the overlapping part of the frame.
fn normalized_acf(x: &[f64], lag: usize) -> f64 {
    let n = x.len() - lag;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b) = (x[i], x[i + lag]);
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    let denom = (xx * yy).sqrt();
    if denom > 0.0 {
        xy / denom
    } else {
        0.0
    }
}

/// Pitch of a single frame: `(f0_hz, strength)` or `None` when unvoiced.
pub fn frame_pitch(frame: &[f64], sample_rate: u32, params: &PitchParams) -> Option<(f64, f64)> {
    let fs = sample_rate as f64;
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
    if x.iter().all(|&v| v == 0.0) {
        return None;
    }
    let lag_min = (fs / params.max_hz).floor().max(1.0) as usize;
    let lag_max = ((fs / params.min_hz).ceil() as usize).min(x.len() / 2);
    if lag_max < lag_min + 2 {
        return None;
    }
    // one extra lag on each side so the band edges can be local maxima
    let lo = lag_min.saturating_sub(1).max(1);
    let hi = (lag_max + 1).min(x.len() - 1);
    let acf: Vec<f64> = (lo..=hi).map(|lag| normalized_acf(&x, lag)).collect();
    let peaks: Vec<(usize, f64)> = (1..acf.len() - 1)
        .filter(|&i| acf[i] > acf[i - 1] && acf[i] >= acf[i + 1])
        .map(|i| (i, acf[i]))
        .filter(|&(i, _)| (lag_min..=lag_max).contains(&(lo + i)))
        .collect();
    let best = peaks.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !(best >= params.voicing_threshold) {
        return None;
    }
    let &(i, r) = peaks.iter().find(|p| p.1 >= params.octave_tolerance * best)?;
    // parabolic refinement of the peak lag
    let (a, b, c) = (acf[i - 1], acf[i], acf[i + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let lag = (lo + i) as f64 + shift;
    Some((fs / lag, r.min(1.0)))
}

pub fn f0_contour(frames: &Frames, sample_rate: u32, params: &PitchParams) -> PitchContour {
    let (f0, strength) = frames
        .iter()
        .map(|f| match frame_pitch(f, sample_rate, params) {
            Some((hz, r)) => (Some(hz), Some(r)),
            None => (None, None),
        })
        .unzip();
    PitchContour { f0, strength }
}

pub const HNR_LIMIT_DB: f64 = 60.0;

/// `10 log10(r / (1 - r))` clamped to `±60 dB`.
pub fn hnr_db(r: f64) -> f64 {
    if r >= 1.0 {
        return HNR_LIMIT_DB;
    }
    if r <= 0.0 {
        return -HNR_LIMIT_DB;
    }
    (10.0 * (r / (1.0 - r)).log10()).clamp(-HNR_LIMIT_DB, HNR_LIMIT_DB)
}

/// Per-frame HNR in dB; unvoiced frames are `None`.
pub fn hnr(contour: &PitchContour) -> Vec<Option<f64>> {
    contour.strength.iter().map(|r| r.map(hnr_db)).collect()
}
