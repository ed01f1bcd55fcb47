//! Synthetic auscultation corpus in the on-disk format of [`crate::corpus`].
//!
//! Normal channels carry band-limited breath noise under a breathing
//! envelope. Pathological subjects additionally get crackles (damped
//! sinusoid bursts during inspiration) and/or wheezes (frequency-jittered
//! tones) on a random subset of channels, scaled to a target SNR.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    write_wav, CorpusError, CorpusIndex, Diagnosis, Level, ManifestEntry, Sex, Side, SubjectMeta, MANIFEST_FILE,
};
use crate::rng::{rng_for, DetRng};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adventitious {
    Crackles,
    Wheezes,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub pathological_fraction: f64,
    /// Fraction of men within each class.
    pub male_fraction: f64,
    pub seed: u64,
    pub sample_rate: u32,
    pub duration_s: f64,
    /// Breathing cycles per recording, drawn uniformly from this range.
    pub breath_cycles: (f64, f64),
    pub breath_band_hz: (f64, f64),
    /// Crackles per second of inspiration.
    pub crackle_rate: f64,
    pub wheeze_band_hz: (f64, f64),
    /// Adventitious-to-breath power ratio on affected channels, in dB.
    pub snr_db: f64,
    /// Range of affected channels per pathological subject.
    pub affected_channels: (usize, usize),
    /// Largest heart-sound amplitude relative to breath RMS (any subject).
    pub heart_level: f64,
    /// Probability that a subject's recordings carry friction bursts.
    pub friction_prob: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_subjects: 45,
            pathological_fraction: 19.0 / 45.0,
            male_fraction: 25.0 / 45.0,
            seed: 7,
            sample_rate: 4000,
            duration_s: 15.0,
            breath_cycles: (3.0, 4.0),
            breath_band_hz: (100.0, 1000.0),
            crackle_rate: 3.0,
            wheeze_band_hz: (100.0, 800.0),
            snr_db: -12.0,
            affected_channels: (2, 6),
            heart_level: 1.5,
            friction_prob: 0.4,
        }
    }
}

/// Channel layout written to the manifest: 1-3 left, 4-6 right, upper to lower.
pub fn channel_location(channel: u8) -> (Side, Level) {
    let side = if channel <= 3 { Side::Left } else { Side::Right };
    let level = match (channel - 1) % 3 {
        0 => Level::Upper,
        1 => Level::Middle,
        _ => Level::Lower,
    };
    (side, level)
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.pathological_fraction > 0.0 && self.pathological_fraction < 1.0) {
            return bad(format!("pathological fraction {} must lie in (0, 1)", self.pathological_fraction));
        }
        if !(0.0..=1.0).contains(&self.male_fraction) {
            return bad(format!("male fraction {} must lie in [0, 1]", self.male_fraction));
        }
        let n_path = self.n_pathological();
        if self.n_subjects < 2 || n_path == 0 || n_path == self.n_subjects {
            return bad(format!("{} subjects cannot hold both classes at fraction {}", self.n_subjects, self.pathological_fraction));
        }
        if self.sample_rate < 1000 || self.duration_s <= 0.0 {
            return bad("sample rate must be at least 1000 Hz and duration positive".into());
        }
        let nyq = self.sample_rate as f64 / 2.0;
        for (name, (lo, hi)) in [("breath band", self.breath_band_hz), ("wheeze band", self.wheeze_band_hz)] {
            if !(lo > 0.0 && lo < hi && hi < nyq) {
                return bad(format!("{name} ({lo}, {hi}) must satisfy 0 < lo < hi < {nyq}"));
            }
        }
        let (a, b) = self.affected_channels;
        if !(1 <= a && a <= b && b <= 6) {
            return bad(format!("affected channel range ({a}, {b}) must lie within 1..=6"));
        }
        if self.heart_level < 0.0 || !(0.0..=1.0).contains(&self.friction_prob) {
            return bad("heart level must be non-negative and friction probability in [0, 1]".into());
        }
        if !(self.breath_cycles.0 > 0.0 && self.breath_cycles.0 <= self.breath_cycles.1) {
            return bad("breath cycle range must be positive and ordered".into());
        }
        Ok(())
    }

    pub fn n_pathological(&self) -> usize {
        (self.n_subjects as f64 * self.pathological_fraction).round() as usize
    }

    pub fn n_samples(&self) -> usize {
        (self.sample_rate as f64 * self.duration_s).round() as usize
    }

    /// Subject table: codes, sexes split per class by `male_fraction`, ages.
    pub fn subjects(&self) -> Vec<SubjectMeta> {
        let n_path = self.n_pathological();
        let mut rng = rng_for(self.seed, &[u64::MAX]);
        let mut diagnoses: Vec<Diagnosis> = (0..self.n_subjects)
            .map(|i| if i < n_path { Diagnosis::Pathological } else { Diagnosis::Normal })
            .collect();
        diagnoses.shuffle(&mut rng);
        let mut sexes = vec![Sex::Female; self.n_subjects];
        for dx in [Diagnosis::Normal, Diagnosis::Pathological] {
            let mut members: Vec<usize> = (0..self.n_subjects).filter(|&i| diagnoses[i] == dx).collect();
            members.shuffle(&mut rng);
            let males = (members.len() as f64 * self.male_fraction).round() as usize;
            for &i in members.iter().take(males) {
                sexes[i] = Sex::Male;
            }
        }
        (0..self.n_subjects)
            .map(|i| SubjectMeta {
                subject_code: format!("S{:03}", i + 1),
                sex: sexes[i],
                age: rng.gen_range(30..=85) as f64,
                diagnosis: diagnoses[i],
            })
            .collect()
    }
}

fn gaussian(rng: &mut DetRng) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// White noise band-limited by zeroing FFT bins outside `[lo, hi]`, scaled to unit RMS.
pub fn band_noise(n: usize, fs: f64, lo: f64, hi: f64, rng: &mut DetRng) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(gaussian(rng), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        if f < lo || f > hi {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let r = rms(&out);
    if r > 0.0 {
        out.iter_mut().for_each(|v| *v /= r);
    }
    out
}

struct Breathing {
    cycles_per_s: f64,
    phase: f64,
}

impl Breathing {
    /// Position in the cycle, 0..1; inspiration occupies the first 40%.
    fn cycle_pos(&self, t: f64) -> f64 {
        (t * self.cycles_per_s + self.phase).rem_euclid(1.0)
    }

    fn envelope(&self, t: f64) -> f64 {
        let p = self.cycle_pos(t);
        let shape = if p < 0.4 { (PI * p / 0.4).sin() } else { 0.6 * (PI * (p - 0.4) / 0.6).sin() };
        0.2 + 0.8 * shape
    }
}

fn add_crackles(out: &mut [f64], fs: f64, rate: f64, breath: &Breathing, rng: &mut DetRng) {
    let duration = out.len() as f64 / fs;
    let inspiration = duration * 0.4;
    let count = Poisson::new((rate * inspiration).max(1e-9)).map(|p| p.sample(rng) as usize).unwrap_or(0);
    let mut placed = 0;
    let mut attempts = 0;
    while placed < count && attempts < count * 50 + 50 {
        attempts += 1;
        let t0 = rng.gen_range(0.0..duration);
        if breath.cycle_pos(t0) >= 0.4 {
            continue;
        }
        placed += 1;
        let len_s = rng.gen_range(0.005..0.020);
        let freq = rng.gen_range(200.0..1200.0f64).min(fs / 2.0 * 0.9);
        let amp = rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let tau = len_s / 4.0;
        let start = (t0 * fs) as usize;
        let len = (len_s * fs).ceil() as usize;
        for k in 0..len {
            let i = start + k;
            if i >= out.len() {
                break;
            }
            let t = k as f64 / fs;
            out[i] += amp * (-t / tau).exp() * (2.0 * PI * freq * t).sin();
        }
    }
}

fn add_wheezes(out: &mut [f64], fs: f64, band: (f64, f64), rng: &mut DetRng) {
    let duration = out.len() as f64 / fs;
    let count = rng.gen_range(2..=5);
    for _ in 0..count {
        let len_s = rng.gen_range(0.4..1.5f64).min(duration);
        let t0 = rng.gen_range(0.0..(duration - len_s).max(1e-9));
        let f0 = rng.gen_range(band.0..band.1);
        let vib_rate = rng.gen_range(3.0..8.0);
        let vib_depth = rng.gen_range(0.01..0.04);
        let amp = rng.gen_range(0.6..1.2);
        let start = (t0 * fs) as usize;
        let len = (len_s * fs) as usize;
        let mut phase = 0.0;
        let mut drift = 0.0;
        for k in 0..len {
            let i = start + k;
            if i >= out.len() {
                break;
            }
            let t = k as f64 / fs;
            drift = 0.999 * drift + 0.001 * gaussian(rng);
            let f = (f0 * (1.0 + vib_depth * (2.0 * PI * vib_rate * t).sin() + drift)).clamp(band.0 * 0.5, fs / 2.0 * 0.95);
            phase += 2.0 * PI * f / fs;
            let fade = (PI * k as f64 / len as f64).sin();
            out[i] += amp * fade * (phase.sin() + 0.3 * (2.0 * phase).sin());
        }
    }
}

/// Heart sounds: pairs of low damped tones once per beat.
fn add_heart(out: &mut [f64], fs: f64, bpm: f64, amp: f64, rng: &mut DetRng) {
    let beat = 60.0 / bpm;
    let mut t = rng.gen_range(0.0..beat);
    let duration = out.len() as f64 / fs;
    while t < duration {
        for (offset, scale) in [(0.0, 1.0), (0.3 * beat, 0.7)] {
            let f = rng.gen_range(40.0..120.0);
            let start = ((t + offset) * fs) as usize;
            for k in 0..(0.06 * fs) as usize {
                let i = start + k;
                if i >= out.len() {
                    break;
                }
                let tt = k as f64 / fs;
                out[i] += amp * scale * (-tt / 0.015).exp() * (2.0 * PI * f * tt).sin();
            }
        }
        t += beat * rng.gen_range(0.95..1.05);
    }
}

/// Stethoscope friction: Hann-windowed broadband noise bursts.
fn add_friction(out: &mut [f64], fs: f64, amp: f64, rng: &mut DetRng) {
    let duration = out.len() as f64 / fs;
    let count = rng.gen_range(1..=6);
    for _ in 0..count {
        let len = (rng.gen_range(0.05..0.3) * fs) as usize;
        let start = (rng.gen_range(0.0..duration) * fs) as usize;
        let a = amp * rng.gen_range(1.0..3.0);
        for k in 0..len {
            let i = start + k;
            if i >= out.len() {
                break;
            }
            out[i] += a * (PI * k as f64 / len as f64).sin().powi(2) * gaussian(rng);
        }
    }
}

/// Signals of one subject, channel 1 first.
pub fn subject_signals(spec: &SynthSpec, index: usize, meta: &SubjectMeta) -> Vec<Vec<f64>> {
    let fs = spec.sample_rate as f64;
    let n = spec.n_samples();
    let mut rng = rng_for(spec.seed, &[index as u64]);
    let cycles = rng.gen_range(spec.breath_cycles.0..=spec.breath_cycles.1);
    let breath = Breathing { cycles_per_s: cycles / spec.duration_s, phase: rng.gen_range(0.0..1.0) };
    let subject_gain = 0.08 * (rng.gen_range(-0.5..0.5f64)).exp();
    let lo = spec.breath_band_hz.0 * rng.gen_range(0.7..1.5);
    let hi = (spec.breath_band_hz.1 * rng.gen_range(0.6..1.4)).min(fs / 2.0 * 0.98);
    let heart_amp = rng.gen_range(0.0..=spec.heart_level);
    let bpm = rng.gen_range(55.0..100.0);
    let friction = rng.gen_bool(spec.friction_prob);
    let kind = match rng.gen_range(0..3) {
        0 => Adventitious::Crackles,
        1 => Adventitious::Wheezes,
        _ => Adventitious::Both,
    };
    let mut affected = [false; 6];
    if meta.diagnosis == Diagnosis::Pathological {
        let k = rng.gen_range(spec.affected_channels.0..=spec.affected_channels.1);
        let mut chans: Vec<usize> = (0..6).collect();
        chans.shuffle(&mut rng);
        for &c in chans.iter().take(k) {
            affected[c] = true;
        }
    }
    (0..6)
        .map(|c| {
            let mut crng = rng_for(spec.seed, &[index as u64, c as u64 + 1]);
            let noise = band_noise(n, fs, lo, hi, &mut crng);
            let mut x: Vec<f64> = noise.iter().enumerate().map(|(i, v)| v * breath.envelope(i as f64 / fs)).collect();
            let breath_rms = rms(&x);
            let mut nuisance = vec![0.0; n];
            add_heart(&mut nuisance, fs, bpm, heart_amp * crng.gen_range(0.5..1.5), &mut crng);
            if friction {
                add_friction(&mut nuisance, fs, 1.0, &mut crng);
            }
            if affected[c] {
                let mut adv = vec![0.0; n];
                if matches!(kind, Adventitious::Crackles | Adventitious::Both) {
                    add_crackles(&mut adv, fs, spec.crackle_rate, &breath, &mut crng);
                }
                if matches!(kind, Adventitious::Wheezes | Adventitious::Both) {
                    add_wheezes(&mut adv, fs, spec.wheeze_band_hz, &mut crng);
                }
                let ra = rms(&adv);
                if ra > 0.0 {
                    let scale = breath_rms * 10f64.powf(spec.snr_db / 20.0) / ra;
                    x.iter_mut().zip(&adv).for_each(|(v, a)| *v += scale * a);
                }
            }
            x.iter_mut().zip(&nuisance).for_each(|(v, a)| *v += breath_rms * a);
            let gain = subject_gain * crng.gen_range(0.8..1.25);
            let floor = 1e-3;
            let mut y: Vec<f64> = x.iter().map(|v| gain * v + floor * gaussian(&mut crng)).collect();
            let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > 0.95 {
                y.iter_mut().for_each(|v| *v *= 0.95 / peak);
            }
            y
        })
        .collect()
}

/// Writes the WAV files and manifest under `out_dir` and returns the loaded index.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<CorpusIndex> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let subjects = spec.subjects();
    let entries: Vec<Vec<ManifestEntry>> = subjects
        .par_iter()
        .enumerate()
        .map(|(i, meta)| -> Result<Vec<ManifestEntry>> {
            let signals = subject_signals(spec, i, meta);
            let mut out = Vec::with_capacity(6);
            for (c, sig) in signals.iter().enumerate() {
                let channel = c as u8 + 1;
                let file = format!("{}_ch{}.wav", meta.subject_code, channel);
                write_wav(&out_dir.join(&file), spec.sample_rate, sig)?;
                out.push(ManifestEntry { file, subject: meta.subject_code.clone(), channel });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let index = CorpusIndex {
        root: out_dir.to_path_buf(),
        subjects: subjects.iter().map(|s| (s.subject_code.clone(), s.clone())).collect::<BTreeMap<_, _>>(),
        channel_map: (1..=6u8).map(|c| (c, channel_location(c))).collect(),
        entries: entries.into_iter().flatten().collect(),
    };
    std::fs::write(out_dir.join(MANIFEST_FILE), index.to_manifest_csv())?;
    Ok(CorpusIndex::load(out_dir)?)
}
