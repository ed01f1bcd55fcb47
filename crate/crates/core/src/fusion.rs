//! Decision fusion: average row scores over a patient, side, level or channel key.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Level, Side};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("group {0} mixes labels")]
    InconsistentGroupLabel(String),
    #[error("no predictions to fuse")]
    EmptyGroup,
    #[error("row {row_id} lacks the {field} field required by scope {scope}")]
    MissingField { row_id: usize, field: &'static str, scope: FusionScope },
    #[error("bad prediction file: {0}")]
    BadFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, FusionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionScope {
    Code,
    CodeSide,
    CodeLevel,
    CodeChannel,
}

impl FusionScope {
    pub const ALL: [FusionScope; 4] = [FusionScope::Code, FusionScope::CodeSide, FusionScope::CodeLevel, FusionScope::CodeChannel];

    pub fn name(self) -> &'static str {
        match self {
            FusionScope::Code => "code",
            FusionScope::CodeSide => "code_side",
            FusionScope::CodeLevel => "code_level",
            FusionScope::CodeChannel => "code_channel",
        }
    }
}

impl fmt::Display for FusionScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionScope {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "code" | "patient" | "subject" => Ok(FusionScope::Code),
            "code_side" | "side" => Ok(FusionScope::CodeSide),
            "code_level" | "level" => Ok(FusionScope::CodeLevel),
            "code_channel" | "channel" => Ok(FusionScope::CodeChannel),
            other => Err(format!("invalid fusion scope {other:?}; expected code, side, level or channel")),
        }
    }
}

/// One scored row, as pooled from a cross-validation repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub repeat: usize,
    pub fold: usize,
    pub row_id: usize,
    pub subject: String,
    pub side: Option<Side>,
    pub level: Option<Level>,
    pub channel: Option<u8>,
    pub window: Option<usize>,
    pub score: f64,
    pub label: u8,
}

type GroupKey = (usize, String, Option<u8>, Option<u8>, Option<u8>);

fn group_key(p: &Prediction, scope: FusionScope) -> Result<GroupKey> {
    let missing = |field| FusionError::MissingField { row_id: p.row_id, field, scope };
    let (side, level, channel) = match scope {
        FusionScope::Code => (None, None, None),
        FusionScope::CodeSide => (Some(p.side.ok_or_else(|| missing("side"))?.code()), None, None),
        FusionScope::CodeLevel => (None, Some(p.level.ok_or_else(|| missing("level"))?.code()), None),
        FusionScope::CodeChannel => (None, None, Some(p.channel.ok_or_else(|| missing("channel"))?)),
    };
    Ok((p.repeat, p.subject.clone(), side, level, channel))
}

fn common<T: PartialEq + Copy>(values: impl Iterator<Item = Option<T>>) -> Option<T> {
    let mut out: Option<Option<T>> = None;
    for v in values {
        match out {
            None => out = Some(v),
            Some(prev) if prev != v => return None,
            _ => {}
        }
    }
    out.flatten()
}

/// Averages scores within each group of `scope`; one output per group in key
/// order. Fields shared by all members are kept, the others are cleared.
pub fn fuse(predictions: &[Prediction], scope: FusionScope) -> Result<Vec<Prediction>> {
    if predictions.is_empty() {
        return Err(FusionError::EmptyGroup);
    }
    let mut groups: BTreeMap<GroupKey, Vec<&Prediction>> = BTreeMap::new();
    for p in predictions {
        groups.entry(group_key(p, scope)?).or_default().push(p);
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let first = members[0];
            if members.iter().any(|m| m.label != first.label) {
                return Err(FusionError::InconsistentGroupLabel(format!("{} {:?}", key.1, (key.2, key.3, key.4))));
            }
            let score = members.iter().map(|m| m.score).sum::<f64>() / members.len() as f64;
            Ok(Prediction {
                repeat: first.repeat,
                fold: first.fold,
                row_id: members.iter().map(|m| m.row_id).min().unwrap_or(first.row_id),
                subject: first.subject.clone(),
                side: common(members.iter().map(|m| m.side)),
                level: common(members.iter().map(|m| m.level)),
                channel: common(members.iter().map(|m| m.channel)),
                window: common(members.iter().map(|m| m.window)),
                score,
                label: first.label,
            })
        })
        .collect()
}

const HEADER: [&str; 11] =
    ["repeat", "fold", "row_id", "subject", "side", "level", "channel", "window", "score", "label", "fused_scope"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_predictions(path: &Path, predictions: &[Prediction], scope: Option<FusionScope>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    let scope_name = scope.map(|s| s.name()).unwrap_or("none");
    for p in predictions {
        w.write_record([
            p.repeat.to_string(),
            p.fold.to_string(),
            p.row_id.to_string(),
            p.subject.clone(),
            opt(p.side.map(|s| s.name())),
            opt(p.level.map(|l| l.name())),
            opt(p.channel),
            opt(p.window),
            format!("{:?}", p.score),
            p.label.to_string(),
            scope_name.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().take(10).ne(HEADER.iter().take(10).copied()) {
        return Err(FusionError::BadFile(format!("unexpected header {headers:?}")));
    }
    let bad = |what: &str, v: &str| FusionError::BadFile(format!("bad {what} {v:?}"));
    fn parse_opt<T: FromStr>(s: &str) -> std::result::Result<Option<T>, ()> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| ())
        }
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        out.push(Prediction {
            repeat: f(0).parse().map_err(|_| bad("repeat", f(0)))?,
            fold: f(1).parse().map_err(|_| bad("fold", f(1)))?,
            row_id: f(2).parse().map_err(|_| bad("row_id", f(2)))?,
            subject: f(3).to_string(),
            side: parse_opt(f(4)).map_err(|_| bad("side", f(4)))?,
            level: parse_opt(f(5)).map_err(|_| bad("level", f(5)))?,
            channel: parse_opt(f(6)).map_err(|_| bad("channel", f(6)))?,
            window: parse_opt(f(7)).map_err(|_| bad("window", f(7)))?,
            score: f(8).parse().map_err(|_| bad("score", f(8)))?,
            label: f(9).parse().map_err(|_| bad("label", f(9)))?,
        });
    }
    Ok(out)
}
