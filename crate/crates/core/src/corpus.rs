//! Recordings, subject metadata, the corpus manifest and windowing.
//!
//! A corpus is a directory of mono 16-bit PCM WAV files described by a CSV
//! manifest with the header `file,subject,channel,side,level,sex,age,diagnosis`.
//! The manifest is the only place where channel numbers are bound to body
//! locations.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling rate of the clinical corpus format.
pub const NOMINAL_SAMPLE_RATE: u32 = 4000;
/// Number of auscultation points per subject.
pub const CHANNELS_PER_SUBJECT: usize = 6;
/// Fixed scale between 16-bit PCM and normalized amplitudes.
pub const PCM_SCALE: f64 = 32768.0;

pub const MANIFEST_HEADER: [&str; 8] =
    ["file", "subject", "channel", "side", "level", "sex", "age", "diagnosis"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: expected a mono recording, found {channels} channels")]
    NotMono { path: PathBuf, channels: u16 },
    #[error("{path}: expected 16-bit integer PCM")]
    NotPcm16 { path: PathBuf },
    #[error("{path}: sample rate {found} Hz, expected {expected} Hz")]
    WrongSampleRate { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: truncated or malformed data chunk")]
    TruncatedFile { path: PathBuf },
    #[error("{path}: not a RIFF/WAVE file ({reason})")]
    NotWave { path: PathBuf, reason: String },
    #[error("{path}: not listed in the corpus manifest")]
    UnknownSubject { path: PathBuf },
    #[error("subject {subject}: channel {channel} listed more than once")]
    DuplicateChannel { subject: String, channel: u8 },
    #[error("subject {subject}: missing diagnosis")]
    MissingDiagnosis { subject: String },
    #[error("manifest references missing file {path}")]
    DanglingFileReference { path: PathBuf },
    #[error("channel {channel} is mapped to more than one (side, level) location")]
    InconsistentChannelMapping { channel: u8 },
    #[error("subject {subject}: sex, age or diagnosis differ between manifest rows")]
    InconsistentSubject { subject: String },
    #[error("manifest line {line}: {reason}")]
    BadManifestRow { line: usize, reason: String },
    #[error("recording of {samples} samples is too short for {n_windows} windows")]
    RecordingTooShort { samples: usize, n_windows: usize },
    #[error("unsupported window count {0}; expected 1, 3 or 5")]
    BadWindowCount(usize),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

macro_rules! text_enum {
    ($name:ident { $($variant:ident => [$($alias:literal),+]),+ $(,)? }) => {
        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                let lower = s.trim().to_ascii_lowercase();
                $(if [$($alias),+].contains(&lower.as_str()) { return Ok($name::$variant); })+
                Err(format!("invalid {} value {:?}", stringify!($name).to_lowercase(), s))
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}
text_enum!(Side { Left => ["left", "l"], Right => ["right", "r"] });

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    Upper,
    Middle,
    Lower,
}
text_enum!(Level { Upper => ["upper", "u"], Middle => ["middle", "m"], Lower => ["lower", "low"] });

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
}
text_enum!(Sex { Female => ["f", "female"], Male => ["m", "male"] });

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Diagnosis {
    Normal,
    Pathological,
}

impl Diagnosis {
    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            0 => Some(Diagnosis::Normal),
            1 => Some(Diagnosis::Pathological),
            _ => None,
        }
    }

    /// Binary label; the pathological class is the positive one.
    pub fn label(self) -> u8 {
        match self {
            Diagnosis::Normal => 0,
            Diagnosis::Pathological => 1,
        }
    }
}

impl Side {
    pub fn code(self) -> u8 {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl Level {
    pub fn code(self) -> u8 {
        match self {
            Level::Upper => 0,
            Level::Middle => 1,
            Level::Lower => 2,
        }
    }
    pub fn name(self) -> &'static str {
        match self {
            Level::Upper => "upper",
            Level::Middle => "middle",
            Level::Lower => "lower",
        }
    }
}

impl Sex {
    pub fn name(self) -> &'static str {
        match self {
            Sex::Female => "F",
            Sex::Male => "M",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub subject_code: String,
    pub sex: Sex,
    pub age: f64,
    pub diagnosis: Diagnosis,
}

/// Number of analysis windows per recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Windowing {
    W0,
    W3,
    W5,
}

impl Windowing {
    pub fn n_windows(self) -> usize {
        match self {
            Windowing::W0 => 1,
            Windowing::W3 => 3,
            Windowing::W5 => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Windowing::W0 => "w0",
            Windowing::W3 => "w3",
            Windowing::W5 => "w5",
        }
    }
}

impl FromStr for Windowing {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "w0" => Ok(Windowing::W0),
            "w3" => Ok(Windowing::W3),
            "w5" => Ok(Windowing::W5),
            other => Err(format!("invalid windowing {other:?}; expected w0, w3 or w5")),
        }
    }
}

impl fmt::Display for Windowing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One channel's signal with its location metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_code: String,
    pub channel: u8,
    pub side: Side,
    pub level: Level,
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl Recording {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedRecording {
    pub subject_code: String,
    pub channel: u8,
    pub side: Side,
    pub level: Level,
    pub sample_rate: u32,
    pub window_index: usize,
    pub n_windows: usize,
    /// First sample of the window in the parent recording.
    pub start: usize,
    pub samples: Vec<f64>,
}

/// Sample boundaries `b_j = floor(j * len / (n + 1))` for `j = 0..=n+1`;
/// window `i` spans `[b_i, b_{i+2})`.
pub fn window_bounds(len: usize, n_windows: usize) -> Result<Vec<(usize, usize)>> {
    if !matches!(n_windows, 1 | 3 | 5) {
        return Err(CorpusError::BadWindowCount(n_windows));
    }
    if n_windows == 1 {
        if len == 0 {
            return Err(CorpusError::RecordingTooShort { samples: len, n_windows });
        }
        return Ok(vec![(0, len)]);
    }
    let parts = n_windows + 1;
    if len < parts {
        return Err(CorpusError::RecordingTooShort { samples: len, n_windows });
    }
    let b = |j: usize| j * len / parts;
    Ok((0..n_windows).map(|i| (b(i), b(i + 2))).collect())
}

/// Splits a recording into `n` windows overlapping by 50%.
pub fn split_windows(rec: &Recording, n_windows: usize) -> Result<Vec<WindowedRecording>> {
    let bounds = window_bounds(rec.samples.len(), n_windows)?;
    Ok(bounds
        .into_iter()
        .enumerate()
        .map(|(i, (start, end))| WindowedRecording {
            subject_code: rec.subject_code.clone(),
            channel: rec.channel,
            side: rec.side,
            level: rec.level,
            sample_rate: rec.sample_rate,
            window_index: i,
            n_windows,
            start,
            samples: rec.samples[start..end].to_vec(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WavOptions {
    /// Accept sample rates other than 4 kHz.
    pub allow_any_rate: bool,
}

/// Reads a mono 16-bit PCM WAV file and returns `(sample_rate, normalized samples)`.
pub fn read_wav(path: &Path, opts: WavOptions) -> Result<(u32, Vec<f64>)> {
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CorpusError::NotMono { path: path.to_owned(), channels: spec.channels });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(CorpusError::NotPcm16 { path: path.to_owned() });
    }
    if !opts.allow_any_rate && spec.sample_rate != NOMINAL_SAMPLE_RATE {
        return Err(CorpusError::WrongSampleRate {
            path: path.to_owned(),
            found: spec.sample_rate,
            expected: NOMINAL_SAMPLE_RATE,
        });
    }
    let declared = reader.duration() as usize;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_hound(path, e))?;
    if samples.len() != declared {
        return Err(CorpusError::TruncatedFile { path: path.to_owned() });
    }
    Ok((spec.sample_rate, samples))
}

fn map_hound(path: &Path, err: hound::Error) -> CorpusError {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            CorpusError::TruncatedFile { path: path.to_owned() }
        }
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => {
            CorpusError::Io { path: path.to_owned(), source: e }
        }
        hound::Error::IoError(e) => CorpusError::Io { path: path.to_owned(), source: e },
        hound::Error::Unsupported => CorpusError::NotPcm16 { path: path.to_owned() },
        other => CorpusError::NotWave { path: path.to_owned(), reason: other.to_string() },
    }
}

/// Quantizes a normalized amplitude to 16-bit PCM.
pub fn to_pcm16(x: f64) -> i16 {
    (x * PCM_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Writes mono 16-bit PCM samples.
pub fn write_wav_pcm16(path: &Path, sample_rate: u32, samples: &[i16]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let io_err = |e: hound::Error| match e {
        hound::Error::IoError(source) => CorpusError::Io { path: path.to_owned(), source },
        other => CorpusError::NotWave { path: path.to_owned(), reason: other.to_string() },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(io_err)?;
    for &s in samples {
        writer.write_sample(s).map_err(io_err)?;
    }
    writer.finalize().map_err(io_err)
}

/// Writes normalized samples, quantizing with [`to_pcm16`].
pub fn write_wav(path: &Path, sample_rate: u32, samples: &[f64]) -> Result<()> {
    let pcm: Vec<i16> = samples.iter().map(|&x| to_pcm16(x)).collect();
    write_wav_pcm16(path, sample_rate, &pcm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Path relative to the corpus root, as written in the manifest.
    pub file: String,
    pub subject: String,
    pub channel: u8,
}

/// Immutable index over a corpus: subjects, channel locations and files.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    pub root: PathBuf,
    pub subjects: BTreeMap<String, SubjectMeta>,
    pub channel_map: BTreeMap<u8, (Side, Level)>,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.csv";

impl CorpusIndex {
    /// Loads `manifest.csv` from a corpus directory, or a manifest file directly.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_owned() };
        let root = manifest.parent().map(Path::to_owned).unwrap_or_default();
        let text = std::fs::read_to_string(&manifest)
            .map_err(|source| CorpusError::Io { path: manifest.clone(), source })?;
        let index = Self::parse(&text, root)?;
        for e in &index.entries {
            let p = index.root.join(&e.file);
            if !p.is_file() {
                return Err(CorpusError::DanglingFileReference { path: p });
            }
        }
        Ok(index)
    }

    /// Parses manifest text without touching the file system.
    pub fn parse(text: &str, root: PathBuf) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
        if header != MANIFEST_HEADER {
            return Err(CorpusError::BadManifestRow {
                line: 1,
                reason: format!("expected header {}", MANIFEST_HEADER.join(",")),
            });
        }
        let mut subjects: BTreeMap<String, SubjectMeta> = BTreeMap::new();
        let mut channel_map: BTreeMap<u8, (Side, Level)> = BTreeMap::new();
        let mut entries = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let bad = |reason: String| CorpusError::BadManifestRow { line, reason };
            let field = |k: usize| row.get(k).unwrap_or("");
            let subject = field(1).to_string();
            if subject.is_empty() {
                return Err(bad("empty subject".into()));
            }
            let channel: u8 = field(2).parse().map_err(|_| bad(format!("bad channel {:?}", field(2))))?;
            if !(1..=CHANNELS_PER_SUBJECT as u8).contains(&channel) {
                return Err(bad(format!("channel {channel} outside 1..=6")));
            }
            let side: Side = field(3).parse().map_err(bad)?;
            let level: Level = field(4).parse().map_err(bad)?;
            let sex: Sex = field(5).parse().map_err(bad)?;
            let age: f64 = field(6).parse().map_err(|_| bad(format!("bad age {:?}", field(6))))?;
            let diagnosis = match field(7) {
                "" | "NA" | "na" => return Err(CorpusError::MissingDiagnosis { subject }),
                d => d
                    .parse::<u8>()
                    .ok()
                    .and_then(Diagnosis::from_label)
                    .ok_or_else(|| bad(format!("diagnosis must be 0 or 1, got {d:?}")))?,
            };
            if !seen.insert((subject.clone(), channel)) {
                return Err(CorpusError::DuplicateChannel { subject, channel });
            }
            match channel_map.get(&channel) {
                Some(&loc) if loc != (side, level) => {
                    return Err(CorpusError::InconsistentChannelMapping { channel })
                }
                _ => {
                    channel_map.insert(channel, (side, level));
                }
            }
            let meta = SubjectMeta { subject_code: subject.clone(), sex, age, diagnosis };
            match subjects.get(&subject) {
                Some(prev) if *prev != meta => return Err(CorpusError::InconsistentSubject { subject }),
                Some(_) => {}
                None => {
                    subjects.insert(subject.clone(), meta);
                }
            }
            entries.push(ManifestEntry { file: field(0).to_string(), subject, channel });
        }
        Ok(CorpusIndex { root, subjects, channel_map, entries })
    }

    pub fn recording_count(&self) -> usize {
        self.entries.len()
    }

    pub fn location(&self, channel: u8) -> Option<(Side, Level)> {
        self.channel_map.get(&channel).copied()
    }

    /// Loads one manifest entry as a [`Recording`].
    pub fn load_entry(&self, entry: &ManifestEntry, opts: WavOptions) -> Result<Recording> {
        let path = self.root.join(&entry.file);
        let (sample_rate, samples) = read_wav(&path, opts)?;
        let (side, level) = self.channel_map[&entry.channel];
        Ok(Recording {
            subject_code: entry.subject.clone(),
            channel: entry.channel,
            side,
            level,
            sample_rate,
            samples,
        })
    }

    /// Loads a WAV file by path, joining its metadata from the manifest.
    pub fn load_wav(&self, path: &Path, opts: WavOptions) -> Result<Recording> {
        let entry = self
            .entries
            .iter()
            .find(|e| {
                let p = self.root.join(&e.file);
                p == path || (p.file_name() == path.file_name() && same_file(&p, path))
            })
            .ok_or_else(|| CorpusError::UnknownSubject { path: path.to_owned() })?;
        self.load_entry(entry, opts)
    }

    /// Serializes the index back to manifest CSV text (entries in stored order).
    pub fn to_manifest_csv(&self) -> String {
        let mut out = MANIFEST_HEADER.join(",");
        out.push('\n');
        for e in &self.entries {
            let s = &self.subjects[&e.subject];
            let (side, level) = self.channel_map[&e.channel];
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e.file,
                e.subject,
                e.channel,
                side,
                level,
                s.sex.name(),
                s.age,
                s.diagnosis.label()
            ));
        }
        out
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}
