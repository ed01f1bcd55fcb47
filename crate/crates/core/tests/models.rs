use std::collections::BTreeMap;

use auscult::corpus::{Diagnosis, Sex, SubjectMeta};
use auscult::dataset::{Dataset, RowMeta};
use auscult::eval::{auc_prc, make_folds, run_cv, ModelSpec};
use auscult::forest::fcf::FairCutForest;
use auscult::forest::rf::RandomForest;
use auscult::forest::{DataView, ForestError, TrainedModel};
use auscult::{FcfConfig, FusionScope, RfConfig, Variant, Windowing};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn subjects(n: usize) -> Vec<SubjectMeta> {
    (0..n)
        .map(|i| SubjectMeta {
            subject_code: format!("P{i:02}"),
            sex: if i % 3 == 0 { Sex::Female } else { Sex::Male },
            age: 50.0,
            diagnosis: if i % 2 == 0 { Diagnosis::Pathological } else { Diagnosis::Normal },
        })
        .collect()
}

/// Six channel rows per subject; pathological subjects are shifted on `x0`.
fn channel_dataset(meta: &[SubjectMeta], seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 4;
    let mut matrix = Vec::new();
    let mut row_meta = Vec::new();
    let mut labels = Vec::new();
    for s in meta {
        let y = s.diagnosis.label();
        for ch in 1..=6u8 {
            let (side, level) = auscult::synth::channel_location(ch);
            matrix.push(rng.sample::<f64, _>(StandardNormal) + 1.5 * y as f64);
            matrix.extend((1..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            row_meta.push(RowMeta { subject: s.subject_code.clone(), side: Some(side), level: Some(level), channel: Some(ch), window: None });
            labels.push(y);
        }
    }
    Dataset {
        variant: Variant::Raw,
        windowing: Windowing::W0,
        column_names: (0..d).map(|j| format!("x{j}")).collect(),
        matrix,
        row_meta,
        labels,
    }
}

fn toy(seed: u64) -> (Vec<f64>, Vec<u8>, Vec<String>) {
    let ds = channel_dataset(&subjects(12), seed);
    (ds.matrix, ds.labels, ds.column_names)
}

#[test]
fn rf_json_round_trip_scores_bit_exact() {
    let (x, y, names) = toy(1);
    let rf = RandomForest::fit(DataView::new(&x, 4), &y, &names, &RfConfig { num_trees: 40, seed: 3, ..Default::default() }).unwrap();
    let model = TrainedModel::Rf(rf);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rf.json");
    model.save(&path).unwrap();
    let back = TrainedModel::load(&path).unwrap();
    let a = model.score_rows(DataView::new(&x, 4)).unwrap();
    let b = back.score_rows(DataView::new(&x, 4)).unwrap();
    assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert_eq!(back, model);
}

#[test]
fn fcf_json_round_trip_scores_bit_exact() {
    let (x, _, names) = toy(2);
    let fcf = FairCutForest::fit(DataView::new(&x, 4), &names, &FcfConfig { num_trees: 40, seed: 5, ..Default::default() }).unwrap();
    let model = TrainedModel::Fcf(fcf);
    let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
    let a = model.score_rows(DataView::new(&x, 4)).unwrap();
    let b = back.score_rows(DataView::new(&x, 4)).unwrap();
    assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn model_files_from_a_newer_format_are_rejected() {
    let (x, _, names) = toy(3);
    let fcf = FairCutForest::fit(DataView::new(&x, 4), &names, &FcfConfig { num_trees: 2, ..Default::default() }).unwrap();
    let text = TrainedModel::Fcf(fcf).to_json().unwrap().replacen("\"format_version\":1", "\"format_version\":99", 1);
    assert!(matches!(TrainedModel::from_json(&text), Err(ForestError::UnsupportedVersion(99))));
}

#[test]
fn named_scoring_requires_training_column_order() {
    let (x, y, names) = toy(4);
    let rf = TrainedModel::Rf(RandomForest::fit(DataView::new(&x, 4), &y, &names, &RfConfig { num_trees: 20, ..Default::default() }).unwrap());
    assert_eq!(rf.score_named(&names, DataView::new(&x, 4)).unwrap(), rf.score_rows(DataView::new(&x, 4)).unwrap());
    let swapped: Vec<String> = [2usize, 0, 3, 1].iter().map(|&j| names[j].clone()).collect();
    assert!(matches!(rf.score_named(&swapped, DataView::new(&x, 4)), Err(ForestError::ColumnNameMismatch)));
    assert!(matches!(rf.score_named(&names[..3], DataView::new(&x, 4)), Err(ForestError::ColumnMismatch { expected: 4, found: 3 })));
}

#[test]
fn cv_scores_every_row_once_per_repeat_in_its_subjects_fold() {
    let meta = subjects(18);
    let ds = channel_dataset(&meta, 5);
    let plan = make_folds(&meta, 6, 3, 9).unwrap();
    let spec = ModelSpec::Rf { config: RfConfig { num_trees: 30, ..Default::default() }, tune: None };
    let runs = run_cv(&ds, &plan, &spec, None).unwrap();
    assert_eq!(runs.len(), 3);
    for run in &runs {
        let ids: Vec<usize> = run.predictions.iter().map(|p| p.row_id).collect();
        assert_eq!(ids, (0..ds.n_rows()).collect::<Vec<_>>());
        for p in &run.predictions {
            assert_eq!(Some(p.fold), plan.fold_of(run.repeat, &p.subject));
            assert_eq!(p.label, ds.labels[p.row_id]);
        }
        assert!(run.auc_roc > 0.8, "AUC {}", run.auc_roc);
    }
}

#[test]
fn fused_cv_has_one_prediction_per_group() {
    let meta = subjects(18);
    let ds = channel_dataset(&meta, 6);
    let plan = make_folds(&meta, 6, 2, 1).unwrap();
    let spec = ModelSpec::Fcf { config: FcfConfig { num_trees: 20, ..Default::default() } };
    for (scope, per_subject) in [(FusionScope::Code, 1), (FusionScope::CodeSide, 2), (FusionScope::CodeLevel, 3), (FusionScope::CodeChannel, 6)] {
        let runs = run_cv(&ds, &plan, &spec, Some(scope)).unwrap();
        for run in &runs {
            assert_eq!(run.predictions.len(), 18 * per_subject, "{scope:?}");
        }
    }
}

#[test]
fn fcf_ignores_labels() {
    let meta = subjects(18);
    let ds = channel_dataset(&meta, 7);
    let plan = make_folds(&meta, 6, 2, 4).unwrap();
    let spec = ModelSpec::Fcf { config: FcfConfig { num_trees: 25, seed: 2, ..Default::default() } };
    let base = run_cv(&ds, &plan, &spec, None).unwrap();
    // relabel subjects at random; the fold plan stays fixed
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let flips: BTreeMap<String, u8> = meta.iter().map(|s| (s.subject_code.clone(), rng.gen_range(0..2))).collect();
    let mut relabelled = ds.clone();
    for (l, m) in relabelled.labels.iter_mut().zip(&ds.row_meta) {
        *l ^= flips[&m.subject];
    }
    let other = run_cv(&relabelled, &plan, &spec, None).unwrap();
    for (a, b) in base.iter().zip(&other) {
        let sa: Vec<u64> = a.scores().iter().map(|v| v.to_bits()).collect();
        let sb: Vec<u64> = b.scores().iter().map(|v| v.to_bits()).collect();
        assert_eq!(sa, sb);
    }
}

#[test]
fn cv_is_reproducible() {
    let meta = subjects(18);
    let ds = channel_dataset(&meta, 9);
    let plan = make_folds(&meta, 3, 2, 0).unwrap();
    let spec = ModelSpec::Rf { config: RfConfig { num_trees: 15, seed: 1, ..Default::default() }, tune: None };
    assert_eq!(run_cv(&ds, &plan, &spec, None).unwrap(), run_cv(&ds, &plan, &spec, None).unwrap());
}

#[test]
fn random_scores_give_prevalence_average_precision() {
    let mut total = 0.0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let scores: Vec<f64> = (0..200).map(|_| rng.gen()).collect();
        total += auc_prc(&scores, &labels).unwrap();
    }
    let mean = total / 100.0;
    assert!((mean - 0.5).abs() <= 0.1, "mean AP {mean}");
}
