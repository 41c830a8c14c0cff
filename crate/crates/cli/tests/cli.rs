use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn kws(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kws"))
        .args(args)
        .output()
        .expect("run kws")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = kws(args);
    assert!(o.status.success(), "kws {args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A tiny synthetic dataset, prepared and featurized once per test binary.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self, rel: &str) -> String {
        self.dir.path().join(rel).to_string_lossy().into_owned()
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        ok(&[
            "synth",
            "--out",
            s(&root.join("data")),
            "--per-word",
            "6",
            "--per-filler",
            "2",
            "--speakers",
            "4",
            "--noise-files",
            "2",
            "--noise-seconds",
            "2",
        ]);
        ok(&[
            "prepare",
            "--data-dir",
            s(&root.join("data")),
            "--out",
            s(&root.join("prep")),
        ]);
        ok(&[
            "featurize",
            "--manifest",
            s(&root.join("prep/manifest.tsv")),
            "--out",
            s(&root.join("spec")),
        ]);
        ok(&[
            "featurize",
            "--manifest",
            s(&root.join("prep/manifest.tsv")),
            "--out",
            s(&root.join("amp")),
            "--mode",
            "amplitude",
        ]);
        Fixture { dir }
    })
}

#[test]
fn help_and_version_exit_zero() {
    assert!(kws(&["--help"]).status.success());
    assert!(kws(&["train", "--help"]).status.success());
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(kws(&["train", "--bogus"]).status.code(), Some(2));
}

#[test]
fn prepare_rejects_bad_split_ratio_and_missing_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = kws(&[
        "prepare",
        "--data-dir",
        s(tmp.path()),
        "--out",
        s(tmp.path()),
        "--split-ratio",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--split-ratio"), "{}", stderr(&o));

    let o = kws(&[
        "prepare",
        "--data-dir",
        s(&tmp.path().join("nope")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--data-dir"));
}

#[test]
fn prepare_prints_histogram_and_manifest_records_root() {
    let f = fixture();
    let manifest = fs::read_to_string(f.path("prep/manifest.tsv")).unwrap();
    assert!(manifest.starts_with("# seed=0\n# root="));
    let out = ok(&[
        "prepare",
        "--data-dir",
        &f.path("data"),
        "--out",
        &f.path("prep2"),
    ]);
    assert!(out.contains("SILENCE"));
    assert!(out.lines().any(|l| l.starts_with("total")));
    assert_eq!(
        fs::read_to_string(f.path("prep2/manifest.tsv")).unwrap(),
        manifest
    );
}

#[test]
fn featurize_dumps_pgm() {
    let f = fixture();
    ok(&[
        "featurize",
        "--manifest",
        &f.path("prep/manifest.tsv"),
        "--out",
        &f.path("pgm"),
        "--dump-pgm",
    ]);
    let n = fs::read_dir(f.path("pgm/pgm/train")).unwrap().count();
    assert!(n > 0);
    let one = fs::read_dir(f.path("pgm/pgm/train"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    assert!(fs::read(one).unwrap().starts_with(b"P5\n28 28\n255\n"));
}

#[test]
fn featurize_rejects_bad_noise_ratio() {
    let f = fixture();
    let o = kws(&[
        "featurize",
        "--manifest",
        &f.path("prep/manifest.tsv"),
        "--out",
        &f.path("x"),
        "--noise-ratio",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--noise-ratio"));
}

#[test]
fn train_writes_artifacts_and_eval_reads_them() {
    let f = fixture();
    let out = ok(&[
        "train",
        "--features",
        &f.path("spec"),
        "--out-dir",
        &f.path("run"),
        "--epochs",
        "2",
    ]);
    assert_eq!(out.lines().filter(|l| l.starts_with("epoch")).count(), 2);
    assert!(out.contains("examples"));
    for name in ["metrics.csv", "model.ckpt", "cost.svg", "accuracy.svg"] {
        assert!(
            Path::new(&f.path("run")).join(name).is_file(),
            "missing {name}"
        );
    }
    let metrics = fs::read_to_string(f.path("run/metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,train_cost,train_acc,val_acc\n"));
    assert!(metrics.ends_with("# exit_reason=MAX_EPOCHS\n"));

    let e = ok(&[
        "eval",
        "--checkpoint",
        &f.path("run/model.ckpt"),
        "--features",
        &f.path("spec"),
    ]);
    assert!(e.starts_with("accuracy "));

    let o = kws(&[
        "eval",
        "--checkpoint",
        &f.path("run/model.ckpt"),
        "--features",
        &f.path("amp"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_is_deterministic() {
    let f = fixture();
    let args = |dir: &str| {
        vec![
            "train".to_string(),
            "--features".into(),
            f.path("spec"),
            "--out-dir".into(),
            f.path(dir),
            "--epochs".into(),
            "2".into(),
            "--vat".into(),
            "both".into(),
            "--dropout-keep".into(),
            "0.5".into(),
            "--seed".into(),
            "3".into(),
        ]
    };
    for dir in ["det_a", "det_b"] {
        let a = args(dir);
        ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    }
    assert_eq!(
        fs::read(f.path("det_a/metrics.csv")).unwrap(),
        fs::read(f.path("det_b/metrics.csv")).unwrap()
    );
}

#[test]
fn vat_logs_tripled_train_count() {
    let f = fixture();
    let out = ok(&[
        "train",
        "--features",
        &f.path("spec"),
        "--out-dir",
        &f.path("vat_run"),
        "--epochs",
        "1",
        "--vat",
        "both",
    ]);
    let first = out.lines().next().unwrap();
    let n: usize = first.split_whitespace().nth(3).unwrap().parse().unwrap();
    let orig: usize = first
        .split('(')
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(n, 3 * orig, "{first}");
}

#[test]
fn mnist_model_rejects_amplitude_geometry() {
    let f = fixture();
    let o = kws(&[
        "train",
        "--features",
        &f.path("amp"),
        "--out-dir",
        &f.path("bad"),
        "--model",
        "mnist",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let f = fixture();
    let cfg = f.dir.path().join("run.conf");
    fs::write(&cfg, "# comment\ntrain.epochs = 3\nseed = 1\n").unwrap();
    let out = ok(&[
        "--config",
        s(&cfg),
        "train",
        "--features",
        &f.path("spec"),
        "--out-dir",
        &f.path("cfg_run"),
    ]);
    assert_eq!(out.lines().filter(|l| l.starts_with("epoch")).count(), 3);
    let out = ok(&[
        "train",
        "--config",
        s(&cfg),
        "--features",
        &f.path("spec"),
        "--out-dir",
        &f.path("cfg_run2"),
        "--epochs",
        "1",
    ]);
    assert_eq!(out.lines().filter(|l| l.starts_with("epoch")).count(), 1);

    fs::write(&cfg, "no_such_key = 4\n").unwrap();
    let o = kws(&[
        "--config",
        s(&cfg),
        "train",
        "--features",
        &f.path("spec"),
        "--out-dir",
        &f.path("x"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_over_trainer_param_uses_features() {
    let f = fixture();
    let out = ok(&[
        "sweep",
        "--features",
        &f.path("spec"),
        "--param",
        "optimizer",
        "--values",
        "adam,sgd",
        "--repeats",
        "1",
        "--epochs",
        "1",
        "--out-dir",
        &f.path("sw"),
    ]);
    assert!(out.contains("optimizer=sgd"));
    let summary = fs::read_to_string(f.path("sw/sweep_optimizer.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(Path::new(&f.path("sw/sweep_optimizer.svg")).is_file());
}

#[test]
fn sweep_over_featurizer_param_needs_manifest() {
    let f = fixture();
    let o = kws(&[
        "sweep",
        "--features",
        &f.path("spec"),
        "--param",
        "buckets",
        "--values",
        "10,20",
        "--out-dir",
        &f.path("sw2"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--manifest"));

    ok(&[
        "sweep",
        "--manifest",
        &f.path("prep/manifest.tsv"),
        "--param",
        "buckets",
        "--values",
        "10,20",
        "--repeats",
        "1",
        "--epochs",
        "1",
        "--out-dir",
        &f.path("sw2"),
    ]);
    assert!(Path::new(&f.path("sw2/sweep_num_buckets.csv")).is_file());
}

#[test]
fn sweep_rejects_unknown_param_and_bad_values() {
    let f = fixture();
    let o = kws(&[
        "sweep",
        "--features",
        &f.path("spec"),
        "--param",
        "colour",
        "--values",
        "1",
        "--out-dir",
        "x",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = kws(&[
        "sweep",
        "--manifest",
        &f.path("prep/manifest.tsv"),
        "--param",
        "noise",
        "--values",
        "0,7",
        "--out-dir",
        "x",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_vat_writes_summary() {
    let f = fixture();
    let out = ok(&[
        "compare-vat",
        "--features",
        &f.path("spec"),
        "--seeds",
        "0",
        "--epochs",
        "1",
        "--fgsm",
        "--out-dir",
        &f.path("cv"),
    ]);
    assert!(out.contains("vat:"));
    let summary = fs::read_to_string(f.path("cv/vat_summary.csv")).unwrap();
    assert!(summary.starts_with("run,seed,train_examples,final_val_acc,exit_epoch,exit_reason\n"));
    assert_eq!(summary.lines().count(), 6);
    assert!(Path::new(&f.path("cv/vat_accuracy_zoom.svg")).is_file());
}
