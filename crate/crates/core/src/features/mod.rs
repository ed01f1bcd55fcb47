//! Named acoustic features per analysis unit (a whole recording or a window).
//!
//! The [`FeatureRegistry`] fixes the ordered feature names plus the frame parameters of the
//! feature vector. The default [`FeatureRegistry::standard`] registry has
//! 370 entries:
//!
//! | family      | entries                                                  | count |
//! |-------------|----------------------------------------------------------|-------|
//! | F0          | `f0_mean`, `f0_std`, `f0_voiced_fraction`                |     3 |
//! | Formant     | `f1_median` .. `f4_median`                               |     4 |
//! | Loudness    | `loudness`                                               |     1 |
//! | HNR         | `hnr_mean`                                               |     1 |
//! | DFA         | `dfa_alpha`                                              |     1 |
//! | LogEnergy   | `log_energy{,_d,_dd}_<stat>`                             |    24 |
//! | RMS         | `rms{,_d,_dd}_<stat>`                                    |    24 |
//! | MFCC        | `mfcc{k}`, `mfcc_d{k}`, `mfcc_dd{k}` (k = 0..12) `_<stat>` |   312 |
//!
//! `<stat>` is one of `mean, std, skewness, kurtosis, min, max, median, iqr`;
//! `_d` / `_dd` are first and second regression deltas of the contour.

pub mod dfa;
pub mod frames;
pub mod lpc;
pub mod pitch;
pub mod spectral;
pub mod stats;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{self, CorpusError, CorpusIndex, Level, Side, WavOptions, Windowing};
use frames::{frame_signal, WindowFn};
use lpc::FormantParams;
use pitch::PitchParams;
use spectral::{SpectralAnalyzer, LOG_FLOOR, MFCC_COEFFS};
use stats::{ContourSummary, Statistic};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{samples} samples is shorter than one frame of {frame_len}")]
    TooShortForFrame { samples: usize, frame_len: usize },
    #[error("invalid framing: frame length {frame_len}, hop {hop}")]
    InvalidFrameParams { frame_len: usize, hop: usize },
    #[error("{samples} samples is too short for detrended fluctuation analysis")]
    TooShortForDfa { samples: usize },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("feature {0:?} listed twice")]
    DuplicateFeature(String),
    #[error("corpus has no recordings")]
    EmptyCorpus,
    #[error("malformed feature table: {0}")]
    BadTable(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    F0,
    Formant,
    Loudness,
    Hnr,
    Dfa,
    LogEnergy,
    Rms,
    Mfcc,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub family: Family,
    pub statistic: Option<Statistic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub frame_length_s: f64,
    pub frame_hop_s: f64,
}

impl Default for FrameParams {
    fn default() -> Self {
        FrameParams { frame_length_s: 0.1, frame_hop_s: 0.05 }
    }
}

impl FrameParams {
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_length_s * sample_rate as f64).round() as usize
    }

    pub fn hop(&self, sample_rate: u32) -> usize {
        (self.frame_hop_s * sample_rate as f64).round() as usize
    }
}

/// Every feature the extractor knows how to compute, in canonical order.
fn catalog() -> Vec<FeatureEntry> {
    let scalar = |name: &str, family| FeatureEntry { name: name.to_string(), family, statistic: None };
    let stat = |name: &str, family, s| FeatureEntry { name: name.to_string(), family, statistic: Some(s) };
    let mut out = vec![
        stat("f0_mean", Family::F0, Statistic::Mean),
        stat("f0_std", Family::F0, Statistic::Std),
        stat("f0_voiced_fraction", Family::F0, Statistic::VoicedFraction),
    ];
    for k in 1..=4 {
        out.push(stat(&format!("f{k}_median"), Family::Formant, Statistic::Median));
    }
    out.push(scalar("loudness", Family::Loudness));
    out.push(stat("hnr_mean", Family::Hnr, Statistic::Mean));
    out.push(scalar("dfa_alpha", Family::Dfa));
    for (contour, family) in contour_names() {
        for s in Statistic::CONTOUR {
            out.push(stat(&format!("{contour}_{}", s.name()), family, s));
        }
    }
    out
}

fn contour_names() -> Vec<(String, Family)> {
    let mut names = Vec::new();
    for (base, family) in [("log_energy", Family::LogEnergy), ("rms", Family::Rms)] {
        for suffix in ["", "_d", "_dd"] {
            names.push((format!("{base}{suffix}"), family));
        }
    }
    for prefix in ["mfcc", "mfcc_d", "mfcc_dd"] {
        for k in 0..MFCC_COEFFS {
            names.push((format!("{prefix}{k}"), Family::Mfcc));
        }
    }
    names
}

/// Ordered list of features plus the framing used to compute them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRegistry {
    pub entries: Vec<FeatureEntry>,
    pub frame: FrameParams,
    #[serde(skip)]
    catalog_index: Vec<usize>,
}

impl FeatureRegistry {
    /// The full 370-entry registry.
    pub fn standard() -> Self {
        let entries = catalog();
        let catalog_index = (0..entries.len()).collect();
        FeatureRegistry { entries, frame: FrameParams::default(), catalog_index }
    }

    /// A registry restricted to (and ordered by) `names`.
    pub fn from_names<S: AsRef<str>>(names: &[S], frame: FrameParams) -> Result<Self> {
        let all = catalog();
        let lookup: HashMap<&str, usize> = all.iter().enumerate().map(|(i, e)| (e.name.as_str(), i)).collect();
        let mut seen = std::collections::HashSet::new();
        let mut entries = Vec::with_capacity(names.len());
        let mut catalog_index = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            let &i = lookup.get(name).ok_or_else(|| FeatureError::UnknownFeature(name.to_string()))?;
            if !seen.insert(name) {
                return Err(FeatureError::DuplicateFeature(name.to_string()));
            }
            entries.push(all[i].clone());
            catalog_index.push(i);
        }
        Ok(FeatureRegistry { entries, frame, catalog_index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    /// Short stable digest of the ordered names and the frame parameters.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.name.as_bytes());
            h.update(b"\n");
        }
        h.update(self.frame.frame_length_s.to_le_bytes());
        h.update(self.frame.frame_hop_s.to_le_bytes());
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Feature values aligned to a registry. Masked entries hold `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub registry_hash: String,
    pub values: Vec<f64>,
    pub na_mask: Vec<bool>,
}

impl FeatureVector {
    fn from_options(registry_hash: String, values: Vec<Option<f64>>) -> Self {
        let na_mask = values.iter().map(|v| !v.is_some_and(f64::is_finite)).collect();
        let values = values.into_iter().map(|v| v.filter(|x| x.is_finite()).unwrap_or(f64::NAN)).collect();
        FeatureVector { registry_hash, values, na_mask }
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        (!self.na_mask[i]).then_some(self.values[i])
    }
}

/// Per-frame RMS and `ln(Σx² + ε)` summaries.
pub fn energy_stats(frames: &frames::Frames) -> (ContourSummary, ContourSummary) {
    let (log_energy, rms) = energy_contours(frames);
    (ContourSummary::of(&log_energy), ContourSummary::of(&rms))
}

fn energy_contours(frames: &frames::Frames) -> (Vec<f64>, Vec<f64>) {
    frames
        .iter()
        .map(|f| {
            let e: f64 = f.iter().map(|x| x * x).sum();
            ((e + LOG_FLOOR).ln(), (e / f.len() as f64).sqrt())
        })
        .unzip()
}

fn push_contour(out: &mut Vec<Option<f64>>, contour: &[f64]) {
    let s = ContourSummary::of(contour);
    out.extend(Statistic::CONTOUR.iter().map(|&st| s.get(st)));
}

/// Computes every catalog feature for one analysis unit.
fn extract_catalog(samples: &[f64], sample_rate: u32, frame: &FrameParams) -> Result<Vec<Option<f64>>> {
    let frame_len = frame.frame_len(sample_rate);
    let hop = frame.hop(sample_rate);
    let raw = frame_signal(samples, frame_len, hop, WindowFn::Rectangular)?;
    let hann = frame_signal(samples, frame_len, hop, WindowFn::Hann)?;

    let mut out = Vec::with_capacity(370);
    let pitch = pitch::f0_contour(&raw, sample_rate, &PitchParams::default());
    let voiced = pitch.voiced();
    let f0 = ContourSummary::of(&voiced);
    out.extend([f0.mean, f0.std, Some(pitch.voiced_fraction())]);

    let per_frame = lpc::formants(&hann, sample_rate, &FormantParams::default());
    for k in 0..4 {
        let mut v: Vec<f64> = per_frame.iter().filter_map(|f| f[k]).collect();
        v.sort_by(f64::total_cmp);
        out.push((!v.is_empty()).then(|| stats::quantile_sorted(&v, 0.5)));
    }

    let analyzer = SpectralAnalyzer::new(frame_len, sample_rate);
    let spectral = spectral::spectral_contours(&hann, &analyzer);
    out.push(stats::mean(&spectral.loudness));

    let hnr: Vec<f64> = pitch::hnr(&pitch).into_iter().flatten().collect();
    out.push(stats::mean(&hnr));

    out.push(match dfa::dfa_exponent(samples) {
        Ok(alpha) => alpha,
        Err(FeatureError::TooShortForDfa { .. }) => None,
        Err(e) => return Err(e),
    });

    let (log_energy, rms) = energy_contours(&raw);
    for contour in [log_energy, rms] {
        let d = stats::deltas(&contour);
        let dd = stats::deltas(&d);
        for c in [&contour, &d, &dd] {
            push_contour(&mut out, c);
        }
    }
    let mfcc_d: Vec<Vec<f64>> = spectral.mfcc.iter().map(|c| stats::deltas(c)).collect();
    let mfcc_dd: Vec<Vec<f64>> = mfcc_d.iter().map(|c| stats::deltas(c)).collect();
    for block in [&spectral.mfcc, &mfcc_d, &mfcc_dd] {
        for c in block.iter() {
            push_contour(&mut out, c);
        }
    }
    Ok(out)
}

/// Computes the registry's features for one analysis unit.
pub fn extract(samples: &[f64], sample_rate: u32, registry: &FeatureRegistry) -> Result<FeatureVector> {
    let all = extract_catalog(samples, sample_rate, &registry.frame)?;
    let values = registry.catalog_index.iter().map(|&i| all[i]).collect();
    Ok(FeatureVector::from_options(registry.hash(), values))
}

/// Identity of an analysis unit: one channel, optionally one window of it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitId {
    pub subject: String,
    pub channel: u8,
    pub side: Side,
    pub level: Level,
    pub window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitFeatures {
    pub id: UnitId,
    pub features: FeatureVector,
}

/// Sidecar metadata written next to a feature CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub registry_hash: String,
    pub feature_count: usize,
    pub frame_length_s: f64,
    pub frame_hop_s: f64,
    pub frame_window: String,
    pub windowing: Windowing,
    pub units: usize,
}

/// Features of every unit in a corpus at one windowing level.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub registry_hash: String,
    pub frame: FrameParams,
    pub windowing: Windowing,
    pub units: Vec<UnitFeatures>,
}

const UNIT_COLUMNS: [&str; 5] = ["unit_subject", "unit_channel", "unit_side", "unit_level", "unit_window"];

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NA".to_string(),
    }
}

impl FeatureTable {
    pub fn manifest(&self) -> FeatureManifest {
        FeatureManifest {
            registry_hash: self.registry_hash.clone(),
            feature_count: self.names.len(),
            frame_length_s: self.frame.frame_length_s,
            frame_hop_s: self.frame.frame_hop_s,
            frame_window: "hann".to_string(),
            windowing: self.windowing,
            units: self.units.len(),
        }
    }

    /// Writes `<stem>.csv` and `<stem>.json`; returns both paths.
    pub fn write(&self, csv_path: &Path) -> Result<(PathBuf, PathBuf)> {
        let mut w = csv::Writer::from_path(csv_path)?;
        let header: Vec<&str> = UNIT_COLUMNS.iter().copied().chain(self.names.iter().map(String::as_str)).collect();
        w.write_record(&header)?;
        for u in &self.units {
            let mut row = vec![
                u.id.subject.clone(),
                u.id.channel.to_string(),
                u.id.side.to_string(),
                u.id.level.to_string(),
                u.id.window.map_or_else(|| "NA".to_string(), |w| w.to_string()),
            ];
            row.extend((0..self.names.len()).map(|i| fmt_value(u.features.get(i))));
            w.write_record(&row)?;
        }
        w.flush().map_err(|source| FeatureError::Io { path: csv_path.to_owned(), source })?;
        let json_path = csv_path.with_extension("json");
        let text = serde_json::to_string_pretty(&self.manifest())?;
        std::fs::write(&json_path, text + "\n").map_err(|source| FeatureError::Io { path: json_path.clone(), source })?;
        Ok((csv_path.to_owned(), json_path))
    }

    /// Reads a feature CSV and its JSON sidecar.
    pub fn read(csv_path: &Path) -> Result<Self> {
        let json_path = csv_path.with_extension("json");
        let text = std::fs::read_to_string(&json_path).map_err(|source| FeatureError::Io { path: json_path, source })?;
        let manifest: FeatureManifest = serde_json::from_str(&text)?;
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < UNIT_COLUMNS.len() || header[..UNIT_COLUMNS.len()] != UNIT_COLUMNS {
            return Err(FeatureError::BadTable("missing unit_* columns".into()));
        }
        let names = header[UNIT_COLUMNS.len()..].to_vec();
        if names.len() != manifest.feature_count {
            return Err(FeatureError::BadTable("feature count differs from sidecar".into()));
        }
        let bad = |m: String| FeatureError::BadTable(m);
        let mut units = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let window = match &rec[4] {
                "NA" => None,
                w => Some(w.parse().map_err(|_| bad(format!("bad window {w:?}")))?),
            };
            let id = UnitId {
                subject: rec[0].to_string(),
                channel: rec[1].parse().map_err(|_| bad(format!("bad channel {:?}", &rec[1])))?,
                side: rec[2].parse().map_err(bad)?,
                level: rec[3].parse().map_err(bad)?,
                window,
            };
            let values = (UNIT_COLUMNS.len()..rec.len())
                .map(|i| match &rec[i] {
                    "NA" => Ok(None),
                    v => v.parse::<f64>().map(Some).map_err(|_| bad(format!("bad value {v:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            units.push(UnitFeatures { id, features: FeatureVector::from_options(manifest.registry_hash.clone(), values) });
        }
        Ok(FeatureTable {
            names,
            registry_hash: manifest.registry_hash,
            frame: FrameParams { frame_length_s: manifest.frame_length_s, frame_hop_s: manifest.frame_hop_s },
            windowing: manifest.windowing,
            units,
        })
    }
}

/// Extracts features for every recording (and window) of a corpus.
///
/// Units are sorted by (subject, channel, window) regardless of the
/// number of worker threads.
pub fn extract_corpus(
    index: &CorpusIndex,
    windowing: Windowing,
    registry: &FeatureRegistry,
    opts: WavOptions,
) -> Result<FeatureTable> {
    if index.entries.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut entries: Vec<_> = index.entries.iter().collect();
    entries.sort_by(|a, b| (&a.subject, a.channel).cmp(&(&b.subject, b.channel)));
    let per_entry: Vec<Vec<UnitFeatures>> = entries
        .par_iter()
        .map(|entry| {
            let rec = index.load_entry(entry, opts)?;
            let windows = corpus::split_windows(&rec, windowing.n_windows())?;
            windows
                .iter()
                .map(|w| {
                    Ok(UnitFeatures {
                        id: UnitId {
                            subject: w.subject_code.clone(),
                            channel: w.channel,
                            side: w.side,
                            level: w.level,
                            window: (windowing != Windowing::W0).then_some(w.window_index),
                        },
                        features: extract(&w.samples, w.sample_rate, registry)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(FeatureTable {
        names: registry.names(),
        registry_hash: registry.hash(),
        frame: registry.frame,
        windowing,
        units: per_entry.into_iter().flatten().collect(),
    })
}
