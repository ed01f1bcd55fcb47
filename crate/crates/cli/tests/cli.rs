use std::path::Path;
use std::process::{Command, Output};

fn auscult(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_auscult")).args(args).env_remove("AUSCULT_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = auscult(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_small(dir: &Path) -> std::path::PathBuf {
    let corpus = dir.join("corpus");
    ok(&["synth", "--subjects", "12", "--duration", "3", "--snr-db", "-3", "--out", p(&corpus)]);
    corpus
}

#[test]
fn synth_writes_manifest_and_recordings() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_small(dir.path());
    let manifest = std::fs::read_to_string(corpus.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 72);
    assert!(corpus.join("S001_ch1.wav").exists());
}

#[test]
fn missing_output_is_a_usage_error() {
    let out = auscult(&["synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));

    let out = auscult(&["run", "--corpus", "nowhere"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("output"));
}

#[test]
fn features_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_small(dir.path());
    let feats = dir.path().join("feats");
    let stdout = ok(&["features", "--corpus", p(&corpus), "--windowing", "w0", "--windowing", "w3", "--out", p(&feats)]);
    assert!(stdout.contains("w0: 72 rows x 370 features"));
    assert!(stdout.contains("w3: 216 rows x 370 features"));
    let rows = std::fs::read_to_string(feats.join("features_w3.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 216);

    let ds = dir.path().join("c3.csv");
    let stdout = ok(&["assemble", "--corpus", p(&corpus), "--features", p(&feats.join("features_w0.csv")), "--variant", "c3", "--out", p(&ds)]);
    assert!(stdout.starts_with("w0 c3 ( 24 x 1111 )"), "{stdout}");

    let config = dir.path().join("exp.conf");
    std::fs::write(&config, "# small run\nmodel = fcf\nk = 3\nrepeats = 2\nnum_trees = 30\n").unwrap();
    let out_dir = dir.path().join("out");
    let stdout = ok(&[
        "run",
        "--config",
        p(&config),
        "--corpus",
        p(&corpus),
        "--features",
        p(&feats.join("features_w3.csv")),
        "--windowing",
        "w3",
        "--variant",
        "raw",
        "--fusion",
        "patient",
        "--output",
        p(&out_dir),
        "--threads",
        "2",
    ]);
    assert!(stdout.lines().nth(1).unwrap().starts_with("FCF w3 raw ( 216 x 370 ) fused,"), "{stdout}");
    for f in ["report.json", "report.csv", "predictions.csv", "config.txt", "roc.svg", "prc.svg"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }

    let table = ok(&["report", p(&out_dir.join("report.json")), p(&out_dir.join("report.json"))]);
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("Model,AUC ROC,AUC PRC,Acc,Kappa,Sens,Spec,Prec,NPV,F1"));
}

#[test]
fn bad_override_is_reported() {
    let out = auscult(&["run", "--set", "repeats", "--output", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("KEY=VALUE"));
}
