//! End-to-end experiment driver configured by a flat `key = value` file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusIndex, SubjectMeta, WavOptions, Windowing};
use crate::dataset::{assemble, attach_meta, default_meta_fields, impute_na, Dataset, DatasetError, ImputeLog, MetaField, NaPolicy, Variant};
use crate::eval::aggregate::{aggregate_runs, z_for, MetricReport};
use crate::eval::{make_folds, run_cv, EvalError, ModelSpec, RunResult};
use crate::features::{extract_corpus, FeatureError, FeatureRegistry, FeatureTable};
use crate::forest::{FcfConfig, ModelKind, RfConfig, TuneConfig, TuneStrategy};
use crate::fusion::{write_predictions, FusionError, FusionScope};
use crate::report::{curve_svg, mean_prc, mean_roc, write_report_csv, write_report_json};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{windowing} {variant} with {} is not a listed combination (set allow_novel = true to run it anyway)", fusion.map(|f| format!("fusion {f}")).unwrap_or_else(|| "no fusion".into()))]
    InvalidCombination { windowing: Windowing, variant: Variant, fusion: Option<FusionScope> },
    #[error("feature file windowing {found} does not match configured {expected}")]
    WindowingMismatch { expected: Windowing, found: Windowing },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Which meta columns to append.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetaChoice {
    /// Location fields for supervised models, none for unsupervised ones.
    Default,
    Fields(Vec<MetaField>),
}

impl FromStr for MetaChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "default" | "auto" => Ok(MetaChoice::Default),
            "none" | "" => Ok(MetaChoice::Fields(Vec::new())),
            list => list.split(',').map(MetaField::from_str).collect::<std::result::Result<_, _>>().map(MetaChoice::Fields),
        }
    }
}

impl MetaChoice {
    pub fn resolve(&self, model: ModelKind, variant: Variant) -> Vec<MetaField> {
        match self {
            MetaChoice::Default if model == ModelKind::Rf => default_meta_fields(variant),
            MetaChoice::Default => Vec::new(),
            MetaChoice::Fields(f) => f.clone(),
        }
    }

    fn render(&self) -> String {
        match self {
            MetaChoice::Default => "default".into(),
            MetaChoice::Fields(f) if f.is_empty() => "none".into(),
            MetaChoice::Fields(f) => f.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    /// Precomputed feature CSV; extracted from the corpus when absent.
    pub features: Option<PathBuf>,
    pub windowing: Windowing,
    pub variant: Variant,
    pub model: ModelKind,
    pub meta: MetaChoice,
    pub fusion: Option<FusionScope>,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub num_trees: usize,
    pub tune: bool,
    pub tune_budget: usize,
    pub tune_warmup: usize,
    pub tune_trees: Option<usize>,
    pub tune_strategy: TuneStrategy,
    pub ndim: usize,
    pub pick_pooled_gain: f64,
    pub na_policy: NaPolicy,
    pub confidence: f64,
    pub allow_novel: bool,
    pub allow_any_rate: bool,
    pub plots: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: None,
            features: None,
            windowing: Windowing::W0,
            variant: Variant::Cms,
            model: ModelKind::Rf,
            meta: MetaChoice::Default,
            fusion: None,
            k: 9,
            repeats: 30,
            seed: 0,
            output: None,
            threads: None,
            num_trees: 500,
            tune: true,
            tune_budget: 30,
            tune_warmup: 19,
            tune_trees: None,
            tune_strategy: TuneStrategy::BayesEi,
            ndim: 3,
            pick_pooled_gain: 1.0,
            na_policy: NaPolicy::MedianImpute,
            confidence: 0.90,
            allow_novel: false,
            allow_any_rate: false,
            plots: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| PipelineError::Config(format!("{key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(PipelineError::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

/// Supported combinations: unfused ones first, then the fused ones.
const LISTED: &[(Windowing, Variant, Option<FusionScope>)] = {
    use FusionScope::*;
    use Variant::*;
    use Windowing::*;
    &[
        (W0, Cms, None),
        (W3, Cms, None),
        (W5, Cms, None),
        (W0, C6, None),
        (W5, C6, None),
        (W0, C3, None),
        (W5, C3, None),
        (W0, C2, None),
        (W5, C2, None),
        (W0, Raw, None),
        (W5, Wms, None),
        (W3, Raw, None),
        (W5, Raw, None),
        (W0, Raw, Some(Code)),
        (W3, Raw, Some(Code)),
        (W5, Raw, Some(Code)),
        (W5, Wms, Some(Code)),
        (W0, C2, Some(Code)),
        (W0, C3, Some(Code)),
        (W5, C2, Some(Code)),
        (W5, C3, Some(Code)),
        (W0, Raw, Some(CodeSide)),
        (W3, Raw, Some(CodeSide)),
        (W5, Raw, Some(CodeSide)),
        (W5, Wms, Some(CodeSide)),
        (W0, Raw, Some(CodeLevel)),
        (W3, Raw, Some(CodeLevel)),
        (W5, Raw, Some(CodeLevel)),
        (W5, Wms, Some(CodeLevel)),
        (W3, Raw, Some(CodeChannel)),
        (W5, Raw, Some(CodeChannel)),
    ]
};

pub fn listed_combinations() -> &'static [(Windowing, Variant, Option<FusionScope>)] {
    LISTED
}

impl PipelineConfig {
    /// Sets one key; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        match key {
            "corpus" => self.corpus = parse_opt_path(value),
            "features" => self.features = parse_opt_path(value),
            "windowing" => self.windowing = parse(key, value)?,
            "variant" => self.variant = parse(key, value)?,
            "model" => self.model = parse(key, value)?,
            "meta" => self.meta = parse(key, value)?,
            "fusion" => {
                self.fusion = match value.to_ascii_lowercase().as_str() {
                    "" | "none" => None,
                    _ => Some(parse(key, value)?),
                }
            }
            "k" => self.k = parse(key, value)?,
            "repeats" => self.repeats = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output" => self.output = parse_opt_path(value),
            "threads" => {
                self.threads = match value {
                    "" | "auto" | "0" => None,
                    _ => Some(parse(key, value)?),
                }
            }
            "num_trees" => self.num_trees = parse(key, value)?,
            "tune" => self.tune = parse_bool(key, value)?,
            "tune_budget" => self.tune_budget = parse(key, value)?,
            "tune_warmup" => self.tune_warmup = parse(key, value)?,
            "tune_trees" => {
                self.tune_trees = match value {
                    "" | "auto" => None,
                    _ => Some(parse(key, value)?),
                }
            }
            "tune_strategy" => {
                self.tune_strategy = match value.to_ascii_lowercase().as_str() {
                    "bayes" | "ei" | "bayes_ei" => TuneStrategy::BayesEi,
                    "random" => TuneStrategy::Random,
                    _ => return Err(PipelineError::Config(format!("tune_strategy: expected bayes or random, got {value:?}"))),
                }
            }
            "ndim" => self.ndim = parse(key, value)?,
            "pick_pooled_gain" => self.pick_pooled_gain = parse(key, value)?,
            "na_policy" => self.na_policy = parse(key, value)?,
            "confidence" => self.confidence = parse(key, value)?,
            "allow_novel" => self.allow_novel = parse_bool(key, value)?,
            "allow_any_rate" => self.allow_any_rate = parse_bool(key, value)?,
            "plots" => self.plots = parse_bool(key, value)?,
            _ => return Err(PipelineError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn to_text(&self) -> String {
        let p = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into());
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("corpus", p(&self.corpus));
        kv("features", p(&self.features));
        kv("windowing", self.windowing.to_string());
        kv("variant", self.variant.to_string());
        kv("model", self.model.label().to_lowercase());
        kv("meta", self.meta.render());
        kv("fusion", self.fusion.map(|f| f.to_string()).unwrap_or_else(|| "none".into()));
        kv("k", self.k.to_string());
        kv("repeats", self.repeats.to_string());
        kv("seed", self.seed.to_string());
        kv("output", p(&self.output));
        kv("threads", self.threads.map(|t| t.to_string()).unwrap_or_else(|| "auto".into()));
        kv("num_trees", self.num_trees.to_string());
        kv("tune", self.tune.to_string());
        kv("tune_budget", self.tune_budget.to_string());
        kv("tune_warmup", self.tune_warmup.to_string());
        kv("tune_trees", self.tune_trees.map(|t| t.to_string()).unwrap_or_else(|| "auto".into()));
        kv("tune_strategy", match self.tune_strategy {
            TuneStrategy::BayesEi => "bayes".into(),
            TuneStrategy::Random => "random".into(),
        });
        kv("ndim", self.ndim.to_string());
        kv("pick_pooled_gain", format!("{:?}", self.pick_pooled_gain));
        kv("na_policy", match self.na_policy {
            NaPolicy::MedianImpute => "median".into(),
            NaPolicy::DropColumns { max_na_fraction } => format!("drop:{max_na_fraction:?}"),
        });
        kv("confidence", format!("{:?}", self.confidence));
        kv("allow_novel", self.allow_novel.to_string());
        kv("allow_any_rate", self.allow_any_rate.to_string());
        kv("plots", self.plots.to_string());
        s
    }

    pub fn is_listed(&self) -> bool {
        LISTED.contains(&(self.windowing, self.variant, self.fusion))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.allow_novel && !self.is_listed() {
            return Err(PipelineError::InvalidCombination { windowing: self.windowing, variant: self.variant, fusion: self.fusion });
        }
        if self.corpus.is_none() {
            return Err(PipelineError::Config("corpus is required (it holds the subject metadata)".into()));
        }
        if self.k < 2 || self.repeats < 1 || self.num_trees < 1 {
            return Err(PipelineError::Config("k >= 2, repeats >= 1 and num_trees >= 1 are required".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(PipelineError::Config("confidence must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        match self.model {
            ModelKind::Rf => ModelSpec::Rf {
                config: RfConfig {
                    num_trees: self.num_trees,
                    seed: self.seed,
                    always_split: Vec::new(),
                    ..Default::default()
                },
                tune: self.tune.then_some(TuneConfig {
                    budget: self.tune_budget,
                    warmup: self.tune_warmup,
                    strategy: self.tune_strategy,
                    num_trees: self.tune_trees,
                }),
            },
            ModelKind::Fcf => ModelSpec::Fcf {
                config: FcfConfig {
                    num_trees: self.num_trees,
                    ndim: self.ndim,
                    pick_pooled_gain: self.pick_pooled_gain,
                    seed: self.seed,
                    ..Default::default()
                },
            },
        }
    }
}

/// Builds the model-ready dataset: variant, NA handling, meta columns.
pub fn prepare_dataset(
    table: &FeatureTable,
    subjects: &BTreeMap<String, SubjectMeta>,
    variant: Variant,
    meta: &[MetaField],
    na_policy: NaPolicy,
) -> Result<(Dataset, ImputeLog)> {
    let ds = assemble(table, subjects, variant)?;
    let (ds, log) = impute_na(&ds, na_policy)?;
    Ok((attach_meta(&ds, meta)?, log))
}

/// `RF w5 cms ( 45 x 740 )`, with ` fused` when decisions are fused.
pub fn report_label(model: ModelKind, ds: &Dataset, fusion: Option<FusionScope>) -> String {
    let mut s = format!("{} {}", model.label(), ds.label());
    if fusion.is_some() {
        s.push_str(" fused");
    }
    s
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub label: String,
    pub report: MetricReport,
    pub runs: Vec<RunResult>,
    pub impute: ImputeLog,
    pub files: Vec<PathBuf>,
}

pub fn load_features(cfg: &PipelineConfig, index: &CorpusIndex) -> Result<FeatureTable> {
    match &cfg.features {
        Some(path) => {
            let table = FeatureTable::read(path)?;
            if table.windowing != cfg.windowing {
                return Err(PipelineError::WindowingMismatch { expected: cfg.windowing, found: table.windowing });
            }
            Ok(table)
        }
        None => Ok(extract_corpus(index, cfg.windowing, &FeatureRegistry::standard(), WavOptions { allow_any_rate: cfg.allow_any_rate })?),
    }
}

/// Runs the experiment and, when `output` is set, writes its files.
pub fn run(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let index = CorpusIndex::load(cfg.corpus.as_deref().expect("validated"))?;
    let table = load_features(cfg, &index)?;
    let meta = cfg.meta.resolve(cfg.model, cfg.variant);
    let (ds, impute) = prepare_dataset(&table, &index.subjects, cfg.variant, &meta, cfg.na_policy)?;
    log::info!("dataset {} ({} cells imputed, {} columns dropped)", ds.label(), impute.imputed_cells, impute.dropped_columns.len());
    let label = report_label(cfg.model, &ds, cfg.fusion);
    let present = ds.subjects();
    let plan = make_folds(index.subjects.values().filter(|s| present.contains(s.subject_code.as_str())), cfg.k, cfg.repeats, cfg.seed)?;
    let runs = run_cv(&ds, &plan, &cfg.model_spec(), cfg.fusion)?;
    let report = aggregate_runs(&label, &runs, cfg.confidence)?;
    log::info!("{label}: AUC ROC {:.3}", report.auc_roc.mean);
    let files = match &cfg.output {
        Some(dir) => write_outputs(dir, cfg, &report, &runs)?,
        None => Vec::new(),
    };
    Ok(PipelineOutput { label, report, runs, impute, files })
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const CONFIG_TXT: &str = "config.txt";
pub const ROC_SVG: &str = "roc.svg";
pub const PRC_SVG: &str = "prc.svg";

/// Writes every output into a staging directory first and moves the files
/// into place only when all of them succeeded.
fn write_outputs(dir: &Path, cfg: &PipelineConfig, report: &MetricReport, runs: &[RunResult]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let staging = dir.join(format!(".staging-{}", std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;
    let result = (|| -> Result<Vec<&'static str>> {
        let mut names = vec![REPORT_JSON, REPORT_CSV, PREDICTIONS_CSV, CONFIG_TXT];
        write_report_json(&staging.join(REPORT_JSON), report)?;
        write_report_csv(&staging.join(REPORT_CSV), std::slice::from_ref(report))?;
        let preds: Vec<_> = runs.iter().flat_map(|r| r.predictions.iter().cloned()).collect();
        write_predictions(&staging.join(PREDICTIONS_CSV), &preds, cfg.fusion)?;
        let mut echo = cfg.clone();
        echo.output = None;
        echo.threads = None;
        std::fs::write(staging.join(CONFIG_TXT), echo.to_text())?;
        if cfg.plots {
            let z = z_for(cfg.confidence);
            let roc = mean_roc(runs, z)?;
            let prc = mean_prc(runs, z)?;
            std::fs::write(staging.join(ROC_SVG), curve_svg(&roc, &report.model, "False positive rate", "True positive rate", true))?;
            std::fs::write(staging.join(PRC_SVG), curve_svg(&prc, &report.model, "Recall", "Precision", false))?;
            names.extend([ROC_SVG, PRC_SVG]);
        }
        Ok(names)
    })();
    let names = match result {
        Ok(n) => n,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    let mut out = Vec::new();
    for name in names {
        let dest = dir.join(name);
        std::fs::rename(staging.join(name), &dest)?;
        out.push(dest);
    }
    std::fs::remove_dir_all(&staging)?;
    Ok(out)
}
