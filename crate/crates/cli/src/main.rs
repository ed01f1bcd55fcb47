use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use auscult::corpus::{CorpusIndex, WavOptions, Windowing};
use auscult::dataset::{NaPolicy, Variant};
use auscult::features::{extract_corpus, FeatureRegistry, FeatureTable};
use auscult::forest::ModelKind;
use auscult::pipeline::{self, MetaChoice, PipelineConfig};
use auscult::report::{read_report_json, report_csv};
use auscult::synth::{generate, SynthSpec};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "auscult", version, about = "Lung auscultation feature extraction and tree-ensemble evaluation")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "AUSCULT_THREADS")]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic corpus.
    Synth(SynthArgs),
    /// Extract the feature table of a corpus for one or more windowings.
    Features(FeaturesArgs),
    /// Build a dataset variant from a feature table.
    Assemble(AssembleArgs),
    /// Run cross-validation from a config file and write the report.
    Run(RunArgs),
    /// Combine report.json files into one table.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 45)]
    subjects: usize,
    /// Fraction of pathological subjects.
    #[arg(long, default_value_t = 19.0 / 45.0)]
    frac: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Adventitious-to-breath power ratio in dB; lower is harder.
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Windowings to extract (w0, w3, w5); repeatable.
    #[arg(long = "windowing", required = true)]
    windowings: Vec<Windowing>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    allow_any_rate: bool,
}

#[derive(Args)]
struct AssembleArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    variant: Variant,
    /// Model the dataset is meant for; decides the default meta columns.
    #[arg(long, default_value = "rf")]
    model: ModelKind,
    /// `default`, `none` or a list such as `side,level`.
    #[arg(long, default_value = "default")]
    meta: MetaChoice,
    #[arg(long, default_value = "median")]
    na_policy: NaPolicy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    windowing: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    fusion: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    allow_novel: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// report.json files, one table row each.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Features(a) => features(a),
        Command::Assemble(a) => assemble(a),
        Command::Run(a) => run(a, cli.threads),
        Command::Report(a) => report(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = SynthSpec { n_subjects: a.subjects, pathological_fraction: a.frac, seed: a.seed, ..Default::default() };
    if let Some(s) = a.snr_db {
        spec.snr_db = s;
    }
    if let Some(d) = a.duration {
        spec.duration_s = d;
    }
    let index = generate(&spec, &a.out).with_context(|| format!("generating corpus in {}", a.out.display()))?;
    println!("{} recordings of {} subjects written to {}", index.recording_count(), index.subjects.len(), a.out.display());
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<()> {
    let index = CorpusIndex::load(&a.corpus).with_context(|| format!("loading corpus {}", a.corpus.display()))?;
    std::fs::create_dir_all(&a.out)?;
    let registry = FeatureRegistry::standard();
    for w in a.windowings {
        let table = extract_corpus(&index, w, &registry, WavOptions { allow_any_rate: a.allow_any_rate })?;
        let path = a.out.join(format!("features_{w}.csv"));
        table.write(&path)?;
        println!("{w}: {} rows x {} features -> {}", table.units.len(), table.names.len(), path.display());
    }
    Ok(())
}

fn assemble(a: AssembleArgs) -> Result<()> {
    let index = CorpusIndex::load(&a.corpus)?;
    let table = FeatureTable::read(&a.features)?;
    let meta = a.meta.resolve(a.model, a.variant);
    let (ds, log) = pipeline::prepare_dataset(&table, &index.subjects, a.variant, &meta, a.na_policy)?;
    ds.write(&a.out)?;
    println!("{} -> {} ({} cells imputed, {} columns dropped)", ds.label(), a.out.display(), log.imputed_cells, log.dropped_columns.len());
    Ok(())
}

fn run(a: RunArgs, threads: Option<usize>) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    let flags = [
        ("corpus", &a.corpus),
        ("features", &a.features),
        ("windowing", &a.windowing),
        ("variant", &a.variant),
        ("model", &a.model),
        ("fusion", &a.fusion),
        ("repeats", &a.repeats),
        ("seed", &a.seed),
        ("output", &a.output),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    for o in &a.overrides {
        let Some((k, v)) = o.split_once('=') else { bail!("--set expects KEY=VALUE, got {o:?}") };
        cfg.set(k, v)?;
    }
    if a.allow_novel {
        cfg.allow_novel = true;
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    if cfg.output.is_none() {
        bail!("no output directory: set `output` in the config or pass --output");
    }
    let out = pipeline::run(&cfg)?;
    print!("{}", report_csv(std::slice::from_ref(&out.report))?);
    for f in &out.files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let reports = a
        .inputs
        .iter()
        .map(|p| read_report_json(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let text = report_csv(&reports)?;
    match a.out {
        Some(p) => std::fs::write(&p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
