//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use auscult::corpus::{split_windows, window_bounds, CorpusIndex, Recording, Side, Level, WavOptions};
use auscult::dataset::{default_meta_fields, NaPolicy};
use auscult::eval::metrics::Confusion;
use auscult::eval::{auc_roc, fold_rows, make_folds};
use auscult::features::dfa::dfa_exponent;
use auscult::features::{extract, extract_corpus, FeatureRegistry, FeatureTable, FrameParams};
use auscult::forest::fcf::FairCutForest;
use auscult::forest::rf::{RandomForest, RfNode};
use auscult::forest::{DataView, ModelKind};
use auscult::fusion::{fuse, Prediction};
use auscult::pipeline::{self, PipelineConfig};
use auscult::synth::{generate, SynthSpec};
use auscult::{FcfConfig, FusionScope, RfConfig, Variant, Windowing};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    corpus: PathBuf,
    index: CorpusIndex,
    tables: BTreeMap<Windowing, (FeatureTable, PathBuf)>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let index = generate(&SynthSpec::default(), &corpus).unwrap();
        let registry = FeatureRegistry::standard();
        let mut tables = BTreeMap::new();
        for w in [Windowing::W0, Windowing::W3, Windowing::W5] {
            let t = extract_corpus(&index, w, &registry, WavOptions::default()).unwrap();
            let path = dir.path().join(format!("features_{w}.csv"));
            t.write(&path).unwrap();
            tables.insert(w, (t, path));
        }
        Fixture { _dir: dir, corpus, index, tables }
    })
}

fn c1_shape_parity() -> Outcome {
    let f = fixture();
    let start = Instant::now();
    use Variant::*;
    use Windowing::*;
    // (windowing, variant, unsupervised shape, supervised shape)
    let expected = [
        (W0, Cms, (45, 740), (45, 740)),
        (W3, Cms, (45, 740), (45, 740)),
        (W5, Cms, (45, 740), (45, 740)),
        (W0, C6, (45, 2220), (45, 2220)),
        (W5, C6, (45, 4440), (45, 4440)),
        (W0, C3, (90, 1110), (90, 1111)),
        (W5, C3, (90, 2220), (90, 2221)),
        (W0, C2, (135, 740), (135, 741)),
        (W5, C2, (135, 1480), (135, 1481)),
        (W0, Raw, (270, 370), (270, 373)),
        (W3, Raw, (810, 370), (810, 373)),
        (W5, Raw, (1350, 370), (1350, 373)),
        (W5, Wms, (270, 740), (270, 743)),
    ];
    for (w, v, unsup, sup) in expected {
        let table = &f.tables[&w].0;
        ensure(table.names.len() == 370, || format!("registry has {} features", table.names.len()))?;
        let (plain, _) = pipeline::prepare_dataset(table, &f.index.subjects, v, &[], NaPolicy::MedianImpute).unwrap();
        ensure(plain.shape() == unsup, || format!("{w} {v}: {:?}, expected {unsup:?}", plain.shape()))?;
        let (rf, _) =
            pipeline::prepare_dataset(table, &f.index.subjects, v, &default_meta_fields(v), NaPolicy::MedianImpute).unwrap();
        ensure(rf.shape() == sup, || format!("RF {w} {v}: {:?}, expected {sup:?}", rf.shape()))?;
    }
    // every listed combination builds
    for &(w, v, _) in pipeline::listed_combinations() {
        pipeline::prepare_dataset(&f.tables[&w].0, &f.index.subjects, v, &[], NaPolicy::MedianImpute).unwrap();
    }
    let (rf, _) = pipeline::prepare_dataset(&f.tables[&W5].0, &f.index.subjects, C3, &default_meta_fields(C3), NaPolicy::MedianImpute)
        .unwrap();
    let label = pipeline::report_label(ModelKind::Rf, &rf, None);
    ensure(label == "RF w5 c3 ( 90 x 2221 )", || format!("label {label:?}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{} shapes exact in {secs:.1} s", expected.len() * 2))
}

fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
        _ => false,
    }
}

fn c2_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.gen_range(2..=50);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // coarse scores so ties are common
        let levels = rng.gen_range(2..=20);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let got = auc_roc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((got - brute_auc(&scores, &labels)).abs());
    }
    ensure(worst <= 1e-12, || format!("AUC deviates by {worst:e}"))?;
    for _ in 0..200 {
        let c = Confusion {
            tp: rng.gen_range(0..40),
            tn: rng.gen_range(0..40),
            fp: rng.gen_range(0..40),
            fn_: rng.gen_range(0..40),
        };
        let (tp, tn, fp, fnn) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
        let n = tp + tn + fp + fnn;
        let div = |a: f64, b: f64| (b > 0.0).then(|| a / b);
        let acc = div(tp + tn, n);
        let pe = ((tp + fp) * (tp + fnn) + (fnn + tn) * (fp + tn)) / (n * n);
        let kappa = acc.and_then(|po| (pe < 1.0).then(|| (po - pe) / (1.0 - pe)));
        let m = c.metrics();
        let pairs = [
            (m.acc, acc),
            (m.kappa, kappa),
            (m.sens, div(tp, tp + fnn)),
            (m.spec, div(tn, tn + fp)),
            (m.prec, div(tp, tp + fp)),
            (m.npv, div(tn, tn + fnn)),
            (m.f1, div(2.0 * tp, 2.0 * tp + fp + fnn)),
        ];
        ensure(pairs.iter().all(|&(a, b)| close(a, b)), || format!("{c:?}: {m:?}"))?;
    }
    Ok(format!("500 AUC instances (max error {worst:.1e}), 200 confusion matrices"))
}

fn c3_windowing() -> Outcome {
    ensure(window_bounds(60000, 3).unwrap() == vec![(0, 30000), (15000, 45000), (30000, 60000)], || "w3 bounds".into())?;
    let w5 = window_bounds(60000, 5).unwrap();
    let want: Vec<(usize, usize)> = (0..5).map(|i| (i * 10000, i * 10000 + 20000)).collect();
    ensure(w5 == want, || format!("w5 bounds {w5:?}"))?;
    let rec = Recording {
        subject_code: "S".into(),
        channel: 1,
        side: Side::Left,
        level: Level::Upper,
        sample_rate: 4000,
        samples: (0..60000).map(|i| i as f64).collect(),
    };
    for (n, bounds) in [(3, window_bounds(60000, 3).unwrap()), (5, w5)] {
        let wins = split_windows(&rec, n).unwrap();
        for (w, (a, b)) in wins.iter().zip(bounds) {
            ensure(w.start == a && w.samples[..] == rec.samples[a..b], || format!("w{n} window {} content", w.window_index))?;
        }
    }
    Ok("w3 and w5 windows exact".into())
}

fn c4_fold_integrity() -> Outcome {
    let f = fixture();
    let subjects = SynthSpec::default().subjects();
    let (k, repeats) = (9, 30);
    let plan = make_folds(&subjects, k, repeats, 11).map_err(|e| e.to_string())?;
    let (raw, _) = pipeline::prepare_dataset(&f.tables[&Windowing::W0].0, &f.index.subjects, Variant::Raw, &[], NaPolicy::MedianImpute)
        .unwrap();
    let mut strata: BTreeMap<_, Vec<&str>> = BTreeMap::new();
    for s in &subjects {
        strata.entry((s.sex, s.diagnosis)).or_default().push(&s.subject_code);
    }
    for r in 0..repeats {
        let mut seen = BTreeSet::new();
        for fold in 0..k {
            let members: BTreeSet<&str> = plan.members(r, fold).into_iter().collect();
            ensure(members.is_disjoint(&seen), || format!("repeat {r}: subject in two folds"))?;
            seen.extend(members.iter().copied());
            for (key, group) in &strata {
                let count = group.iter().filter(|s| members.contains(*s)).count() as f64;
                let share = group.len() as f64 / k as f64;
                ensure((count - share).abs() <= 1.0, || format!("repeat {r} fold {fold} stratum {key:?}: {count} vs {share:.2}"))?;
            }
            let (train, test) = fold_rows(&raw, &plan, r, fold).map_err(|e| e.to_string())?;
            let tr: BTreeSet<&str> = train.iter().map(|&i| raw.row_meta[i].subject.as_str()).collect();
            let te: BTreeSet<&str> = test.iter().map(|&i| raw.row_meta[i].subject.as_str()).collect();
            ensure(tr.is_disjoint(&te), || format!("repeat {r} fold {fold}: subject leak"))?;
            ensure(te == members, || format!("repeat {r} fold {fold}: test rows do not match members"))?;
            ensure(train.len() + test.len() == raw.n_rows(), || "rows lost".into())?;
        }
        ensure(seen.len() == subjects.len(), || format!("repeat {r}: {} subjects assigned", seen.len()))?;
    }
    Ok(format!("{repeats} x {k} folds, no leakage, strata within ±1"))
}

fn c5_fcf_outlier() -> Outcome {
    let start = Instant::now();
    let d = 3;
    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let mut hits = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut x: Vec<f64> = (0..200 * d).map(|_| rng.sample(StandardNormal)).collect();
        x.extend(std::iter::repeat_n(10.0, d));
        let cfg = FcfConfig { seed, ..Default::default() };
        let m = FairCutForest::fit(DataView::new(&x, d), &names, &cfg).map_err(|e| e.to_string())?;
        let s = m.score(DataView::new(&x, d)).map_err(|e| e.to_string())?;
        ensure(s.iter().all(|&v| v > 0.0 && v < 1.0), || format!("seed {seed}: score outside (0, 1)"))?;
        let top = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        hits += (top == 200) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(hits >= 95, || format!("outlier ranked first in {hits}/100 seeds"))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("outlier ranked first in {hits}/100 seeds, {secs:.1} s"))
}

fn c6_rf_sanity() -> Outcome {
    let start = Instant::now();
    let (n, d) = (500, 10);
    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        // class gap of 1 on x0, noise elsewhere
        let x0 = if label == 1 { rng.gen_range(0.5..2.0) } else { rng.gen_range(-2.0..-0.5) };
        x.push(x0);
        x.extend((1..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        y.push(label);
    }
    let cfg = RfConfig { always_split: vec!["x9".into()], trace_candidates: true, seed: 6, ..Default::default() };
    let rf = RandomForest::fit(DataView::new(&x, d), &y, &names, &cfg).map_err(|e| e.to_string())?;
    ensure(rf.oob.accuracy >= 0.95, || format!("OOB accuracy {:.3}", rf.oob.accuracy))?;
    let mut nodes = 0;
    for tree in &rf.trees {
        for node in tree.split_nodes() {
            let RfNode::Split { candidates: Some(c), .. } = node else { return Err("split node without candidate trace".into()) };
            ensure(c.contains(&9), || format!("candidate set {c:?} lacks x9"))?;
            nodes += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1} s"))?;
    Ok(format!("OOB accuracy {:.3}, x9 in all {nodes} candidate sets, {secs:.1} s", rf.oob.accuracy))
}

fn e2e_config(model: ModelKind) -> PipelineConfig {
    let f = fixture();
    PipelineConfig {
        corpus: Some(f.corpus.clone()),
        features: Some(f.tables[&Windowing::W0].1.clone()),
        windowing: Windowing::W0,
        variant: Variant::Cms,
        model,
        repeats: 5,
        seed: 7,
        // tuning runs on 100-tree forests to keep the suite fast
        tune_trees: Some(100),
        ..Default::default()
    }
}

fn c7_discrimination() -> Outcome {
    let start = Instant::now();
    let rf = pipeline::run(&e2e_config(ModelKind::Rf)).map_err(|e| e.to_string())?.report.auc_roc.mean;
    let fcf = pipeline::run(&e2e_config(ModelKind::Fcf)).map_err(|e| e.to_string())?.report.auc_roc.mean;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("RF {rf:.3}, FCF {fcf:.3}, {secs:.0} s");
    ensure(rf >= 0.90 && fcf >= 0.55 && rf > fcf, || detail.clone())?;
    ensure(secs < 900.0, || detail.clone())?;
    Ok(detail)
}

fn read_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn c8_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rf = e2e_config(ModelKind::Rf);
    rf.repeats = 2;
    rf.num_trees = 60;
    rf.tune_budget = 6;
    rf.tune_warmup = 4;
    rf.tune_trees = Some(30);
    let mut fcf = e2e_config(ModelKind::Fcf);
    fcf.variant = Variant::Raw;
    fcf.fusion = Some(FusionScope::Code);
    fcf.repeats = 2;
    fcf.num_trees = 60;
    let mut checked = 0;
    for (name, base) in [("rf", rf), ("fcf", fcf)] {
        let mut outputs = Vec::new();
        for (i, threads) in [1, 1, 3].into_iter().enumerate() {
            let mut cfg = base.clone();
            cfg.threads = Some(threads);
            cfg.output = Some(dir.path().join(format!("{name}_{i}")));
            pipeline::run(&cfg).map_err(|e| e.to_string())?;
            outputs.push(read_all(cfg.output.as_ref().unwrap()));
        }
        ensure(outputs[0].len() >= 4, || format!("{name}: only {} files written", outputs[0].len()))?;
        ensure(outputs[0] == outputs[1], || format!("{name}: repeated run differs"))?;
        ensure(outputs[0] == outputs[2], || format!("{name}: 1 vs 3 threads differ"))?;
        checked += outputs[0].len();
    }
    Ok(format!("{checked} output files byte-identical across runs and thread counts"))
}

fn c9_dsp_oracles() -> Outcome {
    let fs = 4000u32;
    let registry = FeatureRegistry::from_names(&["f0_mean", "rms_mean"], FrameParams::default()).map_err(|e| e.to_string())?;
    let sine = |hz: f64| (0..fs as usize).map(|i| (2.0 * std::f64::consts::PI * hz * i as f64 / fs as f64).sin()).collect::<Vec<_>>();
    let v = extract(&sine(200.0), fs, &registry).map_err(|e| e.to_string())?;
    let f0 = v.get(0).ok_or("no F0 for a 200 Hz sine")?;
    ensure((f0 - 200.0).abs() <= 2.0, || format!("F0 {f0:.3} Hz"))?;
    let rms = v.get(1).ok_or("no RMS")?;
    let target = std::f64::consts::FRAC_1_SQRT_2;
    ensure((rms - target).abs() <= 0.01 * target, || format!("RMS {rms:.5}"))?;
    let mut alphas = Vec::new();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        alphas.push(dfa_exponent(&x).map_err(|e| e.to_string())?.ok_or("DFA undefined")?);
    }
    let alpha = alphas.iter().sum::<f64>() / alphas.len() as f64;
    ensure((0.4..=0.6).contains(&alpha), || format!("mean DFA alpha {alpha:.3}"))?;
    Ok(format!("F0 {f0:.2} Hz, RMS {rms:.5}, DFA alpha {alpha:.3}"))
}

fn c10_fusion_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let scopes = [FusionScope::Code, FusionScope::CodeSide, FusionScope::CodeLevel, FusionScope::CodeChannel];
    let mut tables = 0;
    for _ in 0..300 {
        let n_subjects = rng.gen_range(1..6);
        let windows = rng.gen_range(1..4);
        let repeats = rng.gen_range(1..3);
        let mut preds = Vec::new();
        for r in 0..repeats {
            for s in 0..n_subjects {
                for ch in 1..=6u8 {
                    if rng.gen_bool(0.2) {
                        continue;
                    }
                    let (side, level) = auscult::synth::channel_location(ch);
                    for w in 0..windows {
                        preds.push(Prediction {
                            repeat: r,
                            fold: s % 3,
                            row_id: preds.len(),
                            subject: format!("S{s}"),
                            side: Some(side),
                            level: Some(level),
                            channel: Some(ch),
                            window: Some(w),
                            score: rng.gen(),
                            label: (s % 2) as u8,
                        });
                    }
                }
            }
        }
        if preds.is_empty() {
            continue;
        }
        tables += 1;
        for scope in scopes {
            let key = |p: &Prediction| match scope {
                FusionScope::Code => (p.repeat, p.subject.clone(), 0),
                FusionScope::CodeSide => (p.repeat, p.subject.clone(), p.side.unwrap().code()),
                FusionScope::CodeLevel => (p.repeat, p.subject.clone(), p.level.unwrap().code()),
                FusionScope::CodeChannel => (p.repeat, p.subject.clone(), p.channel.unwrap()),
            };
            let mut groups: BTreeMap<_, Vec<f64>> = BTreeMap::new();
            for p in &preds {
                groups.entry(key(p)).or_default().push(p.score);
            }
            let fused = fuse(&preds, scope).map_err(|e| e.to_string())?;
            ensure(fused.len() == groups.len(), || format!("{scope:?}: {} outputs for {} groups", fused.len(), groups.len()))?;
            for q in &fused {
                let members = &groups[&key_of_fused(q, scope)];
                let lo = members.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = members.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                ensure(q.score >= lo - 1e-12 && q.score <= hi + 1e-12, || format!("{scope:?}: fused score out of bounds"))?;
            }
        }
        // one row per group is the identity
        let single: Vec<Prediction> = preds.iter().filter(|p| p.window == Some(0)).cloned().collect();
        let same = fuse(&single, FusionScope::CodeChannel).map_err(|e| e.to_string())?;
        let mut expect = single.clone();
        expect.sort_by(|a, b| (a.repeat, &a.subject, a.channel).cmp(&(b.repeat, &b.subject, b.channel)));
        ensure(same == expect, || "fusion of singleton groups is not the identity".into())?;
    }
    Ok(format!("{tables} random tables x 4 scopes"))
}

fn key_of_fused(q: &Prediction, scope: FusionScope) -> (usize, String, u8) {
    let extra = match scope {
        FusionScope::Code => 0,
        FusionScope::CodeSide => q.side.unwrap().code(),
        FusionScope::CodeLevel => q.level.unwrap().code(),
        FusionScope::CodeChannel => q.channel.unwrap(),
    };
    (q.repeat, q.subject.clone(), extra)
}

fn main() {
    type Check = (&'static str, fn() -> Outcome);
    let criteria: [Check; 10] = [
        ("1 shape parity", c1_shape_parity),
        ("2 metric oracle equivalence", c2_metric_oracles),
        ("3 windowing exactness", c3_windowing),
        ("4 fold integrity", c4_fold_integrity),
        ("5 FCF outlier property", c5_fcf_outlier),
        ("6 RF sanity", c6_rf_sanity),
        ("7 end-to-end discrimination", c7_discrimination),
        ("8 determinism", c8_determinism),
        ("9 DSP oracles", c9_dsp_oracles),
        ("10 fusion algebra", c10_fusion_algebra),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
