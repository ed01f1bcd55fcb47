//! Dataset variants built from per-unit feature tables.
//!
//! | variant | rows per subject | columns        |
//! |---------|------------------|----------------|
//! | raw     | 6 · n_windows    | F              |
//! | cms     | 1                | 2F             |
//! | wms     | 6                | 2F             |
//! | c2      | 3 (one level)    | 2 · base       |
//! | c3      | 2 (one side)     | 3 · base       |
//! | c6      | 1                | 6 · base       |
//!
//! where `base` is F for `w0` (raw channel rows) and 2F for `w3`/`w5`
//! (window-aggregated channel rows). Meta columns are appended last.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Level, Side, SubjectMeta, Windowing, CHANNELS_PER_SUBJECT};
use crate::features::{stats, FeatureTable, UnitFeatures};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("subject {subject}: missing unit channel {channel} window {window:?}")]
    MissingUnit { subject: String, channel: u8, window: Option<usize> },
    #[error("subject {subject}: missing channel {channel}")]
    MissingChannel { subject: String, channel: String },
    #[error("subject {subject} channel {channel}: expected {expected} windows, found {found}")]
    MissingWindow { subject: String, channel: u8, expected: usize, found: usize },
    #[error("window aggregation needs w3 or w5 features, got {0}")]
    NotWindowed(Windowing),
    #[error("concatenation needs one row per channel (raw w0 or wms), got {0}")]
    NotChannelLevel(String),
    #[error("meta field {field} is not defined for {variant} rows")]
    FieldUndefinedForVariant { field: MetaField, variant: Variant },
    #[error("subject {0} is not in the corpus manifest")]
    UnknownSubject(String),
    #[error("malformed dataset file: {0}")]
    BadFile(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    Raw,
    Cms,
    Wms,
    C2,
    C3,
    C6,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Raw => "raw",
            Variant::Cms => "cms",
            Variant::Wms => "wms",
            Variant::C2 => "c2",
            Variant::C3 => "c3",
            Variant::C6 => "c6",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(Variant::Raw),
            "cms" => Ok(Variant::Cms),
            "wms" => Ok(Variant::Wms),
            "c2" => Ok(Variant::C2),
            "c3" => Ok(Variant::C3),
            "c6" => Ok(Variant::C6),
            other => Err(format!("invalid variant {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetaField {
    Side,
    Level,
    Channel,
}

impl MetaField {
    pub const ALL: [MetaField; 3] = [MetaField::Side, MetaField::Level, MetaField::Channel];

    pub fn column(self) -> &'static str {
        match self {
            MetaField::Side => "meta_side",
            MetaField::Level => "meta_level",
            MetaField::Channel => "meta_channel",
        }
    }
}

impl fmt::Display for MetaField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.column()[5..])
    }
}

impl FromStr for MetaField {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().trim_start_matches("meta_") {
            "side" => Ok(MetaField::Side),
            "level" => Ok(MetaField::Level),
            "channel" => Ok(MetaField::Channel),
            other => Err(format!("invalid meta field {other:?}")),
        }
    }
}

/// Meta columns used for supervised runs: all applicable location fields
/// for channel rows, the shared field for c2/c3 groups and none otherwise.
pub fn default_meta_fields(variant: Variant) -> Vec<MetaField> {
    match variant {
        Variant::Raw | Variant::Wms => MetaField::ALL.to_vec(),
        Variant::C2 => vec![MetaField::Level],
        Variant::C3 => vec![MetaField::Side],
        Variant::Cms | Variant::C6 => Vec::new(),
    }
}

/// What a dataset row stands for. Fields are `None` when the row pools
/// over them.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowMeta {
    pub subject: String,
    pub side: Option<Side>,
    pub level: Option<Level>,
    pub channel: Option<u8>,
    pub window: Option<usize>,
}

impl RowMeta {
    fn subject_only(subject: &str) -> Self {
        RowMeta { subject: subject.to_string(), side: None, level: None, channel: None, window: None }
    }
}

/// Row-major feature matrix with row metadata and binary labels
/// (1 = pathological). Missing values are `NaN` until imputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub variant: Variant,
    pub windowing: Windowing,
    pub column_names: Vec<String>,
    pub matrix: Vec<f64>,
    pub row_meta: Vec<RowMeta>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.row_meta.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows(), self.n_cols())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.matrix[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows()).map(move |i| self.matrix[i * self.n_cols() + j])
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.row_meta.iter().map(|m| m.subject.as_str()).collect()
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let mut matrix = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            matrix.extend_from_slice(self.row(r));
        }
        Dataset {
            variant: self.variant,
            windowing: self.windowing,
            column_names: self.column_names.clone(),
            matrix,
            row_meta: rows.iter().map(|&r| self.row_meta[r].clone()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// `w5 c3 ( 90 x 2220 )`-style label.
    pub fn label(&self) -> String {
        format!("{} {} ( {} x {} )", self.windowing, self.variant, self.n_rows(), self.n_cols())
    }

    pub fn has_missing(&self) -> bool {
        self.matrix.iter().any(|v| v.is_nan())
    }
}

type UnitKey<'a> = (&'a str, u8, Option<usize>);

fn unit_map(table: &FeatureTable) -> BTreeMap<UnitKey<'_>, &UnitFeatures> {
    table.units.iter().map(|u| ((u.id.subject.as_str(), u.id.channel, u.id.window), u)).collect()
}

fn table_subjects(table: &FeatureTable) -> Vec<&str> {
    table.units.iter().map(|u| u.id.subject.as_str()).collect::<BTreeSet<_>>().into_iter().collect()
}

fn label_of(subjects: &BTreeMap<String, SubjectMeta>, subject: &str) -> Result<u8> {
    subjects
        .get(subject)
        .map(|m| m.diagnosis.label())
        .ok_or_else(|| DatasetError::UnknownSubject(subject.to_string()))
}

fn window_keys(windowing: Windowing) -> Vec<Option<usize>> {
    match windowing {
        Windowing::W0 => vec![None],
        w => (0..w.n_windows()).map(Some).collect(),
    }
}

fn unit_values(u: &UnitFeatures) -> impl Iterator<Item = f64> + '_ {
    (0..u.features.values.len()).map(|i| u.features.get(i).unwrap_or(f64::NAN))
}

/// One row per unit, `F` columns.
pub fn build_raw(table: &FeatureTable, subjects: &BTreeMap<String, SubjectMeta>) -> Result<Dataset> {
    let units = unit_map(table);
    let mut ds = Dataset {
        variant: Variant::Raw,
        windowing: table.windowing,
        column_names: table.names.clone(),
        matrix: Vec::new(),
        row_meta: Vec::new(),
        labels: Vec::new(),
    };
    for subject in table_subjects(table) {
        let label = label_of(subjects, subject)?;
        for channel in 1..=CHANNELS_PER_SUBJECT as u8 {
            for window in window_keys(table.windowing) {
                let u = units.get(&(subject, channel, window)).ok_or_else(|| DatasetError::MissingUnit {
                    subject: subject.to_string(),
                    channel,
                    window,
                })?;
                ds.matrix.extend(unit_values(u));
                ds.row_meta.push(RowMeta {
                    subject: subject.to_string(),
                    side: Some(u.id.side),
                    level: Some(u.id.level),
                    channel: Some(channel),
                    window,
                });
                ds.labels.push(label);
            }
        }
    }
    Ok(ds)
}

fn mean_std_columns(names: &[String]) -> Vec<String> {
    names.iter().map(|n| format!("{n}_mean")).chain(names.iter().map(|n| format!("{n}_std"))).collect()
}

/// Means block then sample-std block over a group of units, ignoring NA.
fn mean_std_row(group: &[&UnitFeatures], n_features: usize) -> Vec<f64> {
    let mut means = Vec::with_capacity(n_features);
    let mut stds = Vec::with_capacity(n_features);
    for i in 0..n_features {
        let vals: Vec<f64> = group.iter().filter_map(|u| u.features.get(i)).collect();
        means.push(stats::mean(&vals).unwrap_or(f64::NAN));
        stds.push(stats::sample_std(&vals).unwrap_or(f64::NAN));
    }
    means.extend(stds);
    means
}

/// One row per subject: mean and std of every feature over all channels
/// and windows.
pub fn aggregate_cms(table: &FeatureTable, subjects: &BTreeMap<String, SubjectMeta>) -> Result<Dataset> {
    let units = unit_map(table);
    let f = table.names.len();
    let mut ds = Dataset {
        variant: Variant::Cms,
        windowing: table.windowing,
        column_names: mean_std_columns(&table.names),
        matrix: Vec::new(),
        row_meta: Vec::new(),
        labels: Vec::new(),
    };
    for subject in table_subjects(table) {
        let mut group = Vec::new();
        for channel in 1..=CHANNELS_PER_SUBJECT as u8 {
            for window in window_keys(table.windowing) {
                let u = units.get(&(subject, channel, window)).ok_or_else(|| DatasetError::MissingChannel {
                    subject: subject.to_string(),
                    channel: channel.to_string(),
                })?;
                group.push(*u);
            }
        }
        ds.matrix.extend(mean_std_row(&group, f));
        ds.row_meta.push(RowMeta::subject_only(subject));
        ds.labels.push(label_of(subjects, subject)?);
    }
    Ok(ds)
}

/// One row per (subject, channel): mean and std over that channel's windows.
pub fn aggregate_wms(table: &FeatureTable, subjects: &BTreeMap<String, SubjectMeta>) -> Result<Dataset> {
    if table.windowing == Windowing::W0 {
        return Err(DatasetError::NotWindowed(table.windowing));
    }
    let n = table.windowing.n_windows();
    let f = table.names.len();
    let mut ds = Dataset {
        variant: Variant::Wms,
        windowing: table.windowing,
        column_names: mean_std_columns(&table.names),
        matrix: Vec::new(),
        row_meta: Vec::new(),
        labels: Vec::new(),
    };
    let mut by_channel: BTreeMap<(&str, u8), Vec<&UnitFeatures>> = BTreeMap::new();
    for u in &table.units {
        by_channel.entry((u.id.subject.as_str(), u.id.channel)).or_default().push(u);
    }
    for subject in table_subjects(table) {
        let label = label_of(subjects, subject)?;
        for channel in 1..=CHANNELS_PER_SUBJECT as u8 {
            let group = by_channel.get(&(subject, channel)).ok_or_else(|| DatasetError::MissingChannel {
                subject: subject.to_string(),
                channel: channel.to_string(),
            })?;
            let distinct: BTreeSet<_> = group.iter().map(|u| u.id.window).collect();
            if group.len() != n || distinct.len() != n {
                return Err(DatasetError::MissingWindow {
                    subject: subject.to_string(),
                    channel,
                    expected: n,
                    found: distinct.len(),
                });
            }
            ds.matrix.extend(mean_std_row(group, f));
            ds.row_meta.push(RowMeta {
                subject: subject.to_string(),
                side: Some(group[0].id.side),
                level: Some(group[0].id.level),
                channel: Some(channel),
                window: None,
            });
            ds.labels.push(label);
        }
    }
    Ok(ds)
}

fn position_name(variant: Variant, m: &RowMeta) -> String {
    match variant {
        Variant::C2 => m.side.map(|s| s.to_string()).unwrap_or_default(),
        Variant::C3 => m.level.map(|l| l.to_string()).unwrap_or_default(),
        _ => format!("ch{}", m.channel.unwrap_or_default()),
    }
}

/// Joins the channel rows of a level (c2), a side (c3) or the whole subject
/// (c6) into one long row. Blocks are channel-major; column names carry
/// the position as a suffix.
pub fn concat(variant: Variant, base: &Dataset) -> Result<Dataset> {
    if !matches!(variant, Variant::C2 | Variant::C3 | Variant::C6) {
        return Err(DatasetError::NotChannelLevel(format!("{variant} is not a concatenation variant")));
    }
    let channel_level = matches!(
        (base.variant, base.windowing),
        (Variant::Raw, Windowing::W0) | (Variant::Wms, _)
    );
    if !channel_level || base.row_meta.iter().any(|m| m.channel.is_none() || m.window.is_some()) {
        return Err(DatasetError::NotChannelLevel(base.label()));
    }

    // group key -> members ordered by position
    type Key = (String, Option<Side>, Option<Level>);
    let mut groups: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    for (i, m) in base.row_meta.iter().enumerate() {
        let key = match variant {
            Variant::C2 => (m.subject.clone(), None, m.level),
            Variant::C3 => (m.subject.clone(), m.side, None),
            _ => (m.subject.clone(), None, None),
        };
        groups.entry(key).or_default().push(i);
    }
    let expected = match variant {
        Variant::C2 => 2,
        Variant::C3 => 3,
        _ => CHANNELS_PER_SUBJECT,
    };
    let order = |m: &RowMeta| match variant {
        Variant::C2 => (m.side.map(Side::code).unwrap_or(0), 0),
        Variant::C3 => (m.level.map(Level::code).unwrap_or(0), 0),
        _ => (m.channel.unwrap_or(0), 0),
    };

    let mut out = Dataset {
        variant,
        windowing: base.windowing,
        column_names: Vec::new(),
        matrix: Vec::new(),
        row_meta: Vec::new(),
        labels: Vec::new(),
    };
    for ((subject, side, level), mut members) in groups {
        members.sort_by_key(|&i| order(&base.row_meta[i]));
        if members.len() != expected {
            let have: Vec<String> = members.iter().map(|&i| position_name(variant, &base.row_meta[i])).collect();
            return Err(DatasetError::MissingChannel {
                subject,
                channel: format!("group has {} of {expected} channels ({})", members.len(), have.join(",")),
            });
        }
        let names: Vec<String> = members
            .iter()
            .flat_map(|&i| {
                let pos = position_name(variant, &base.row_meta[i]);
                base.column_names.iter().map(move |c| format!("{c}_{pos}"))
            })
            .collect();
        if out.column_names.is_empty() {
            out.column_names = names;
        } else if out.column_names != names {
            return Err(DatasetError::NotChannelLevel("inconsistent channel positions across groups".into()));
        }
        for &i in &members {
            out.matrix.extend_from_slice(base.row(i));
        }
        out.labels.push(base.labels[members[0]]);
        out.row_meta.push(RowMeta { subject, side, level, channel: None, window: None });
    }
    Ok(out)
}

/// Appends integer-coded location columns (`meta_side`, `meta_level`,
/// `meta_channel`) in canonical order.
pub fn attach_meta(ds: &Dataset, fields: &[MetaField]) -> Result<Dataset> {
    let fields: Vec<MetaField> = MetaField::ALL.into_iter().filter(|f| fields.contains(f)).collect();
    if fields.is_empty() {
        return Ok(ds.clone());
    }
    let mut out = ds.clone();
    out.matrix = Vec::with_capacity(ds.n_rows() * (ds.n_cols() + fields.len()));
    for (i, m) in ds.row_meta.iter().enumerate() {
        out.matrix.extend_from_slice(ds.row(i));
        for &field in &fields {
            let code = match field {
                MetaField::Side => m.side.map(Side::code),
                MetaField::Level => m.level.map(Level::code),
                MetaField::Channel => m.channel,
            };
            let code = code.ok_or(DatasetError::FieldUndefinedForVariant { field, variant: ds.variant })?;
            out.matrix.push(code as f64);
        }
    }
    out.column_names.extend(fields.iter().map(|f| f.column().to_string()));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NaPolicy {
    /// Replace missing cells with the column median; a column with no
    /// observed value becomes the constant 0 so the shape is preserved.
    MedianImpute,
    /// Drop columns whose missing fraction exceeds the bound, then
    /// median-impute the remaining gaps.
    DropColumns { max_na_fraction: f64 },
}

impl FromStr for NaPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("median") {
            return Ok(NaPolicy::MedianImpute);
        }
        if let Some(t) = s.strip_prefix("drop:") {
            let t: f64 = t.parse().map_err(|_| format!("bad drop fraction {t:?}"))?;
            if !(0.0..=1.0).contains(&t) {
                return Err(format!("drop fraction {t} outside [0, 1]"));
            }
            return Ok(NaPolicy::DropColumns { max_na_fraction: t });
        }
        Err(format!("invalid NA policy {s:?}; expected median or drop:<fraction>"))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImputeLog {
    pub dropped_columns: Vec<String>,
    /// Columns that were entirely missing and filled with 0.
    pub constant_columns: Vec<String>,
    pub imputed_cells: usize,
}

/// Removes every missing value according to `policy`.
pub fn impute_na(ds: &Dataset, policy: NaPolicy) -> Result<(Dataset, ImputeLog)> {
    let n = ds.n_rows();
    let mut log = ImputeLog::default();
    let keep: Vec<usize> = match policy {
        NaPolicy::MedianImpute => (0..ds.n_cols()).collect(),
        NaPolicy::DropColumns { max_na_fraction } => (0..ds.n_cols())
            .filter(|&j| {
                let na = ds.column(j).filter(|v| v.is_nan()).count();
                let frac = if n == 0 { 0.0 } else { na as f64 / n as f64 };
                let drop = frac > max_na_fraction || (n > 0 && na == n);
                if drop {
                    log.dropped_columns.push(ds.column_names[j].clone());
                }
                !drop
            })
            .collect(),
    };
    let mut fill = Vec::with_capacity(keep.len());
    for &j in &keep {
        let mut observed: Vec<f64> = ds.column(j).filter(|v| !v.is_nan()).collect();
        if observed.len() == n {
            fill.push(0.0);
            continue;
        }
        if observed.is_empty() {
            log.constant_columns.push(ds.column_names[j].clone());
            fill.push(0.0);
            continue;
        }
        observed.sort_by(f64::total_cmp);
        fill.push(stats::quantile_sorted(&observed, 0.5));
    }
    let mut out = ds.clone();
    out.column_names = keep.iter().map(|&j| ds.column_names[j].clone()).collect();
    out.matrix = Vec::with_capacity(n * keep.len());
    for i in 0..n {
        let row = ds.row(i);
        for (k, &j) in keep.iter().enumerate() {
            let v = row[j];
            if v.is_nan() {
                log.imputed_cells += 1;
                out.matrix.push(fill[k]);
            } else {
                out.matrix.push(v);
            }
        }
    }
    Ok((out, log))
}

/// Builds a dataset variant from a feature table.
pub fn assemble(
    table: &FeatureTable,
    subjects: &BTreeMap<String, SubjectMeta>,
    variant: Variant,
) -> Result<Dataset> {
    match variant {
        Variant::Raw => build_raw(table, subjects),
        Variant::Cms => aggregate_cms(table, subjects),
        Variant::Wms => aggregate_wms(table, subjects),
        Variant::C2 | Variant::C3 | Variant::C6 => {
            let base = match table.windowing {
                Windowing::W0 => build_raw(table, subjects)?,
                _ => aggregate_wms(table, subjects)?,
            };
            concat(variant, &base)
        }
    }
}

const ROW_COLUMNS: [&str; 6] = ["subject", "label", "row_side", "row_level", "row_channel", "row_window"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeManifest {
    pub variant: Variant,
    pub windowing: Windowing,
    pub rows: usize,
    pub columns: usize,
    pub meta_columns: Vec<String>,
    pub label: String,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn parse_opt<T: FromStr>(s: &str) -> Result<Option<T>> {
    if s == "NA" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| DatasetError::BadFile(format!("bad row field {s:?}")))
}

impl Dataset {
    pub fn shape_manifest(&self) -> ShapeManifest {
        ShapeManifest {
            variant: self.variant,
            windowing: self.windowing,
            rows: self.n_rows(),
            columns: self.n_cols(),
            meta_columns: self.column_names.iter().filter(|c| c.starts_with("meta_")).cloned().collect(),
            label: self.label(),
        }
    }

    /// Writes the CSV plus a `.json` shape manifest next to it.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        let header: Vec<&str> = ROW_COLUMNS.iter().copied().chain(self.column_names.iter().map(String::as_str)).collect();
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let m = &self.row_meta[i];
            let mut rec = vec![
                m.subject.clone(),
                self.labels[i].to_string(),
                opt(m.side),
                opt(m.level),
                opt(m.channel),
                opt(m.window),
            ];
            rec.extend(self.row(i).iter().map(|v| if v.is_nan() { "NA".to_string() } else { format!("{v}") }));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| DatasetError::Io { path: csv_path.to_owned(), source })?;
        let json = csv_path.with_extension("json");
        let text = serde_json::to_string_pretty(&self.shape_manifest())? + "\n";
        std::fs::write(&json, text).map_err(|source| DatasetError::Io { path: json, source })
    }

    pub fn read(csv_path: &Path) -> Result<Dataset> {
        let json = csv_path.with_extension("json");
        let text = std::fs::read_to_string(&json).map_err(|source| DatasetError::Io { path: json, source })?;
        let manifest: ShapeManifest = serde_json::from_str(&text)?;
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < ROW_COLUMNS.len() || header[..ROW_COLUMNS.len()] != ROW_COLUMNS {
            return Err(DatasetError::BadFile("missing row columns".into()));
        }
        let mut ds = Dataset {
            variant: manifest.variant,
            windowing: manifest.windowing,
            column_names: header[ROW_COLUMNS.len()..].to_vec(),
            matrix: Vec::new(),
            row_meta: Vec::new(),
            labels: Vec::new(),
        };
        for rec in rdr.records() {
            let rec = rec?;
            ds.labels.push(rec[1].parse().map_err(|_| DatasetError::BadFile(format!("bad label {:?}", &rec[1])))?);
            ds.row_meta.push(RowMeta {
                subject: rec[0].to_string(),
                side: parse_opt(&rec[2])?,
                level: parse_opt(&rec[3])?,
                channel: parse_opt(&rec[4])?,
                window: parse_opt(&rec[5])?,
            });
            for v in rec.iter().skip(ROW_COLUMNS.len()) {
                ds.matrix.push(if v == "NA" {
                    f64::NAN
                } else {
                    v.parse().map_err(|_| DatasetError::BadFile(format!("bad value {v:?}")))?
                });
            }
        }
        if ds.shape() != (manifest.rows, manifest.columns) {
            return Err(DatasetError::BadFile("shape differs from manifest".into()));
        }
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Diagnosis, Sex};
    use crate::features::{FeatureVector, FrameParams, UnitId};

    fn loc(channel: u8) -> (Side, Level) {
        let side = if channel % 2 == 1 { Side::Left } else { Side::Right };
        let level = [Level::Upper, Level::Middle, Level::Lower][((channel - 1) / 2) as usize];
        (side, level)
    }

    /// Synthetic table where each value encodes (subject, channel, window, feature).
    pub(crate) fn toy_table(n_subjects: usize, windowing: Windowing, f: usize) -> FeatureTable {
        let mut units = Vec::new();
        for s in 0..n_subjects {
            for ch in 1..=6u8 {
                for w in window_keys(windowing) {
                    let (side, level) = loc(ch);
                    let values: Vec<f64> = (0..f)
                        .map(|k| (s * 1000 + ch as usize * 100 + w.unwrap_or(0) * 10 + k) as f64)
                        .collect();
                    units.push(UnitFeatures {
                        id: UnitId { subject: format!("s{s:02}"), channel: ch, side, level, window: w },
                        features: FeatureVector { registry_hash: "x".into(), na_mask: vec![false; f], values },
                    });
                }
            }
        }
        FeatureTable {
            names: (0..f).map(|k| format!("feat{k}")).collect(),
            registry_hash: "x".into(),
            frame: FrameParams::default(),
            windowing,
            units,
        }
    }

    pub(crate) fn toy_subjects(n: usize) -> BTreeMap<String, SubjectMeta> {
        (0..n)
            .map(|s| {
                let code = format!("s{s:02}");
                let meta = SubjectMeta {
                    subject_code: code.clone(),
                    sex: if s % 2 == 0 { Sex::Female } else { Sex::Male },
                    age: 50.0,
                    diagnosis: if s % 3 == 0 { Diagnosis::Pathological } else { Diagnosis::Normal },
                };
                (code, meta)
            })
            .collect()
    }

    #[test]
    fn raw_shape_and_labels() {
        let t = toy_table(1, Windowing::W3, 10);
        let ds = build_raw(&t, &toy_subjects(1)).unwrap();
        assert_eq!(ds.shape(), (18, 10));
        assert!(ds.labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn missing_unit() {
        let mut t = toy_table(2, Windowing::W0, 3);
        t.units.remove(4);
        assert!(matches!(build_raw(&t, &toy_subjects(2)), Err(DatasetError::MissingUnit { .. })));
        assert!(matches!(aggregate_cms(&t, &toy_subjects(2)), Err(DatasetError::MissingChannel { .. })));
    }

    #[test]
    fn cms_mean_std() {
        let mut t = toy_table(1, Windowing::W0, 1);
        for (u, v) in t.units.iter_mut().zip([1.0, 2.0, 3.0, 2.0, 2.0, 2.0]) {
            u.features.values[0] = v;
        }
        let ds = aggregate_cms(&t, &toy_subjects(1)).unwrap();
        assert_eq!(ds.column_names, vec!["feat0_mean", "feat0_std"]);
        assert_eq!(ds.row(0)[0], 2.0);
        assert!((ds.row(0)[1] - (0.4f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cms_of_identical_units() {
        let mut t = toy_table(2, Windowing::W5, 4);
        for u in &mut t.units {
            u.features.values = vec![1.5, -2.0, 0.0, 7.0];
        }
        let ds = aggregate_cms(&t, &toy_subjects(2)).unwrap();
        assert_eq!(ds.shape(), (2, 8));
        assert_eq!(ds.row(1), &[1.5, -2.0, 0.0, 7.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn wms_sample_std() {
        let mut t = toy_table(1, Windowing::W5, 1);
        for u in t.units.iter_mut().filter(|u| u.id.channel == 1) {
            u.features.values[0] = if u.id.window == Some(4) { 5.0 } else { 0.0 };
        }
        let ds = aggregate_wms(&t, &toy_subjects(1)).unwrap();
        assert_eq!(ds.shape(), (6, 2));
        assert_eq!(ds.row(0)[0], 1.0);
        assert!((ds.row(0)[1] - 5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            aggregate_wms(&toy_table(1, Windowing::W0, 1), &toy_subjects(1)),
            Err(DatasetError::NotWindowed(_))
        ));
    }

    #[test]
    fn c6_deconcatenates() {
        let t = toy_table(3, Windowing::W0, 4);
        let subjects = toy_subjects(3);
        let raw = build_raw(&t, &subjects).unwrap();
        let c6 = concat(Variant::C6, &raw).unwrap();
        assert_eq!(c6.shape(), (3, 24));
        for s in 0..3 {
            for ch in 0..6 {
                assert_eq!(&c6.row(s)[ch * 4..(ch + 1) * 4], raw.row(s * 6 + ch));
            }
        }
        assert_eq!(c6.column_names[4], "feat0_ch2");
    }

    #[test]
    fn c2_and_c3_groupings() {
        let t = toy_table(2, Windowing::W3, 2);
        let subjects = toy_subjects(2);
        let c2 = assemble(&t, &subjects, Variant::C2).unwrap();
        assert_eq!(c2.shape(), (6, 8));
        assert!(c2.row_meta.iter().all(|m| m.level.is_some() && m.side.is_none()));
        assert_eq!(c2.column_names[0], "feat0_mean_left");
        assert_eq!(c2.column_names[4], "feat0_mean_right");
        let c3 = assemble(&t, &subjects, Variant::C3).unwrap();
        assert_eq!(c3.shape(), (4, 12));
        assert!(attach_meta(&c3, &[MetaField::Side]).is_ok());
        assert!(matches!(
            attach_meta(&c3, &[MetaField::Channel]),
            Err(DatasetError::FieldUndefinedForVariant { field: MetaField::Channel, .. })
        ));
        let raw = build_raw(&t, &subjects).unwrap();
        assert!(matches!(concat(Variant::C3, &raw), Err(DatasetError::NotChannelLevel(_))));
    }

    #[test]
    fn meta_encoding() {
        let t = toy_table(1, Windowing::W0, 2);
        let raw = build_raw(&t, &toy_subjects(1)).unwrap();
        let ds = attach_meta(&raw, &MetaField::ALL).unwrap();
        assert_eq!(ds.shape(), (6, 5));
        assert_eq!(&ds.column_names[2..], &["meta_side", "meta_level", "meta_channel"]);
        // channel 6 sits right / lower
        assert_eq!(&ds.row(5)[2..], &[1.0, 2.0, 6.0]);
        assert_eq!(attach_meta(&raw, &[]).unwrap(), raw);
    }

    #[test]
    fn impute_policies() {
        let t = toy_table(1, Windowing::W0, 3);
        let mut ds = build_raw(&t, &toy_subjects(1)).unwrap().select_rows(&[0, 1, 2]);
        let c = ds.n_cols();
        ds.matrix[0] = 1.0;
        ds.matrix[c] = f64::NAN;
        ds.matrix[2 * c] = 3.0;
        for i in 0..3 {
            ds.matrix[i * c + 2] = f64::NAN;
        }
        let (dropped, log) = impute_na(&ds, NaPolicy::DropColumns { max_na_fraction: 0.9 }).unwrap();
        assert_eq!(log.dropped_columns, vec!["feat2"]);
        assert_eq!(dropped.column(0).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert!(!dropped.has_missing());
        let (filled, log) = impute_na(&ds, NaPolicy::MedianImpute).unwrap();
        assert_eq!(filled.shape(), ds.shape());
        assert_eq!(log.constant_columns, vec!["feat2"]);
        assert_eq!(filled.column(2).collect::<Vec<_>>(), vec![0.0; 3]);
        assert_eq!(log.imputed_cells, 4);
        let clean = build_raw(&t, &toy_subjects(1)).unwrap();
        assert_eq!(impute_na(&clean, NaPolicy::MedianImpute).unwrap().0, clean);
        assert_eq!("drop:0.5".parse::<NaPolicy>().unwrap(), NaPolicy::DropColumns { max_na_fraction: 0.5 });
    }

    #[test]
    fn csv_round_trip() {
        let t = toy_table(2, Windowing::W3, 3);
        let ds = attach_meta(&build_raw(&t, &toy_subjects(2)).unwrap(), &MetaField::ALL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ds.csv");
        ds.write(&p).unwrap();
        assert_eq!(Dataset::read(&p).unwrap(), ds);
    }
}
