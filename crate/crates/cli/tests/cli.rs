use hcgae::checkpoint::{tensors_from_bytes, Checkpoint};
use hcgae::Model;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mutag() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/MUTAG")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcgae"))
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_checkpoint_loss_log_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run1");
    let data = mutag();
    let stdout = ok(&[
        "train",
        "--dataset",
        s(&data),
        "--task",
        "graph",
        "--out",
        s(&out),
        "--epochs",
        "2",
    ]);
    assert!(stdout.contains("final loss"));
    for f in ["model.ckpt", "loss.csv", "resolved-config"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let log = fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
}

#[test]
fn same_seed_gives_identical_loss_log() {
    let dir = tempfile::tempdir().unwrap();
    let data = mutag();
    let logs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            ok(&[
                "train",
                "--dataset",
                s(&data),
                "--out",
                s(&out),
                "--epochs",
                "2",
                "--seed",
                "7",
            ]);
            fs::read(out.join("loss.csv")).unwrap()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn zero_epochs_store_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = mutag();
    ok(&[
        "train",
        "--dataset",
        s(&data),
        "--out",
        s(dir.path()),
        "--epochs",
        "0",
        "--seed",
        "3",
    ]);
    let ck = Checkpoint::load(&dir.path().join("model.ckpt")).unwrap();
    assert!(ck.history.is_empty());
    let init = Model::init(ck.model.spec.clone(), 3).unwrap();
    for ((_, _, a), (_, _, b)) in ck.model.store.iter().zip(init.store.iter()) {
        assert_eq!(a, b);
    }
}

#[test]
fn resolved_config_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = mutag();
    let first = dir.path().join("first");
    ok(&[
        "train",
        "--dataset",
        s(&data),
        "--out",
        s(&first),
        "--epochs",
        "1",
        "--set",
        "hidden=16",
    ]);
    let second = dir.path().join("second");
    let cfg = first.join("resolved-config");
    ok(&["train", "--dataset", s(&data), "--out", s(&second), "--config", s(&cfg)]);
    assert_eq!(
        fs::read(first.join("loss.csv")).unwrap(),
        fs::read(second.join("loss.csv")).unwrap()
    );
}

#[test]
fn eval_prints_fold_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = mutag();
    ok(&["train", "--dataset", s(&data), "--out", s(dir.path()), "--epochs", "1"]);
    let ck = dir.path().join("model.ckpt");
    let stdout = ok(&[
        "eval",
        "--dataset",
        s(&data),
        "--checkpoint",
        s(&ck),
        "--out",
        s(dir.path()),
        "--folds",
        "5",
    ]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1 + 5 + 1);
    assert!(lines.last().unwrap().starts_with("MUTAG, hc-gae, mean, "));
    assert_eq!(lines.last().unwrap().split(", ").count(), 5);
    assert_eq!(fs::read_to_string(dir.path().join("results.csv")).unwrap(), stdout);
}

#[test]
fn eval_of_soft_variant() {
    let dir = tempfile::tempdir().unwrap();
    let data = mutag();
    let stdout = ok(&[
        "eval",
        "--dataset",
        s(&data),
        "--out",
        s(dir.path()),
        "--epochs",
        "1",
        "--variant",
        "se",
        "--folds",
        "3",
    ]);
    assert!(stdout.lines().last().unwrap().starts_with("MUTAG, hc-gae-se, mean, "));
}

#[test]
fn incompatible_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "train",
        "--format",
        "sbm",
        "--out",
        s(dir.path()),
        "--epochs",
        "0",
        "--set",
        "hidden=8",
    ]);
    let ck = dir.path().join("model.ckpt");
    let data = mutag();
    let out = run(&[
        "eval",
        "--dataset",
        s(&data),
        "--checkpoint",
        s(&ck),
        "--out",
        s(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("input features"));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    assert!(!run(&["train", "--dataset", s(&missing), "--out", s(dir.path())])
        .status
        .success());

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "epochs = 1\nlearning_rate = 0.1\n").unwrap();
    let data = mutag();
    let out = run(&[
        "train",
        "--dataset",
        s(&data),
        "--out",
        s(dir.path()),
        "--config",
        s(&cfg),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    let out = run(&["train", "--dataset", s(&data), "--task", "node", "--out", s(dir.path())]);
    assert!(!out.status.success());
}

fn parse_csv(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn export_rows_and_codec_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = mutag();
    ok(&["train", "--dataset", s(&data), "--out", s(dir.path()), "--epochs", "1"]);
    let ck = dir.path().join("model.ckpt");
    let base = [
        "export",
        "--dataset",
        s(&data),
        "--checkpoint",
        s(&ck),
        "--out",
        s(dir.path()),
    ];
    ok(&base);
    ok(&[&base[..], &["--export-format", "bin"]].concat());

    let csv = fs::read_to_string(dir.path().join("embeddings.csv")).unwrap();
    assert!(csv.starts_with("id,dim0,dim1,"));
    let rows = parse_csv(&csv);
    assert_eq!(rows.len(), 188);

    let tensors = tensors_from_bytes(&fs::read(dir.path().join("embeddings.bin")).unwrap()).unwrap();
    let bin = &tensors[0].1;
    assert_eq!(bin.shape(), (188, rows[0].len()));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((v - bin.get(i, j)).abs() <= 1e-12);
        }
    }
}

#[test]
fn node_export_has_one_row_per_node() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "export",
        "--format",
        "sbm",
        "--task",
        "node",
        "--out",
        s(dir.path()),
        "--epochs",
        "1",
        "--set",
        "hidden=8",
    ]);
    let csv = fs::read_to_string(dir.path().join("embeddings.csv")).unwrap();
    assert_eq!(parse_csv(&csv).len(), 100);
}

#[test]
fn diagnose_report_layout() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["diagnose", "--format", "sbm", "--out", s(dir.path())]);
    let report = fs::read_to_string(dir.path().join("diagnose.txt")).unwrap();
    assert_eq!(report, stdout);
    for model in ["hc-gae", "gcn"] {
        let rows = report.lines().filter(|l| l.starts_with(&format!("{model},"))).count();
        assert_eq!(rows, 3, "{model}");
    }
    assert!(report.contains("status,pass"));
    let err: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("max_relative_error,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err < 1e-4);
}

#[test]
fn corrupted_gradient_fails_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "diagnose",
        "--format",
        "sbm",
        "--out",
        s(dir.path()),
        "--corrupt-gradient",
    ]);
    assert!(stdout.contains("status,fail"));
}

#[test]
fn ablate_reports_both_variants() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "ablate",
        "--format",
        "sbm",
        "--out",
        s(dir.path()),
        "--epochs",
        "1",
        "--folds",
        "3",
        "--set",
        "hidden=8",
    ]);
    assert!(stdout.contains("SBM, hc-gae, mean, "));
    assert!(stdout.contains("SBM, hc-gae-se, mean, "));
    assert!(dir.path().join("ablation.csv").is_file());
}
