//! Black-box tests of the command surface: exit codes, file artifacts, and
//! printed verdicts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

const CONFIG: &str = "\
classes = 3
dim = 128
i = 300
k = 8
hidden = 32
epochs = 10
retrain_epochs = 4
chunk_size = 100
n_chunks = 3
u = 40
seed = 7
";

fn specadapt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specadapt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = specadapt(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_fails(dir: &Path, args: &[&str]) -> String {
    let out = specadapt(dir, args);
    assert_eq!(out.status.code(), Some(1), "{args:?} should exit 1");
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(!stderr.is_empty(), "{args:?} printed nothing to stderr");
    stderr
}

/// Shared workspace with generated data and a trained checkpoint; built once
/// because `train` dominates the suite's runtime.
fn fixture() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        std::fs::write(dir.join("experiment.cfg"), CONFIG).unwrap();
        let base = ["--config", "experiment.cfg"];
        run_ok(
            &dir,
            &[&["gen"], &base[..], &["--n", "300", "--out", "train.csv"]].concat(),
        );
        run_ok(
            &dir,
            &[
                &["gen"],
                &base[..],
                &["--n", "300", "--shift", "default", "--out", "stream.csv"],
            ]
            .concat(),
        );
        run_ok(
            &dir,
            &[
                &["train"],
                &base[..],
                &["--data", "train.csv", "--out", "model.json"],
            ]
            .concat(),
        );
        dir
    })
}

#[test]
fn gen_writes_the_requested_rows() {
    let dir = fixture();
    let content = std::fs::read_to_string(dir.join("train.csv")).unwrap();
    assert_eq!(content.lines().count(), 301);
    assert!(content.starts_with("label,w_0,"));
}

#[test]
fn gen_rejects_an_empty_request() {
    let dir = fixture();
    let stderr = assert_fails(dir, &["gen", "--n", "0", "--out", "none.csv"]);
    assert!(stderr.contains("--n 0"), "{stderr}");
    assert!(!dir.join("none.csv").exists());
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = fixture();
    run_ok(
        dir,
        &[
            "gen",
            "--config",
            "experiment.cfg",
            "--n",
            "50",
            "--out",
            "a.csv",
        ],
    );
    run_ok(
        dir,
        &[
            "gen",
            "--config",
            "experiment.cfg",
            "--n",
            "50",
            "--out",
            "b.csv",
        ],
    );
    run_ok(
        dir,
        &[
            "gen",
            "--config",
            "experiment.cfg",
            "--seed",
            "8",
            "--n",
            "50",
            "--out",
            "c.csv",
        ],
    );
    let a = std::fs::read(dir.join("a.csv")).unwrap();
    let b = std::fs::read(dir.join("b.csv")).unwrap();
    let c = std::fs::read(dir.join("c.csv")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn train_reports_accuracy_and_writes_a_checkpoint() {
    let dir = fixture();
    assert!(dir.join("model.json").exists());
    let stdout = run_ok(
        dir,
        &[
            "train",
            "--config",
            "experiment.cfg",
            "--data",
            "train.csv",
            "--out",
            "model_again.json",
        ],
    );
    assert!(stdout.contains("train accuracy"), "{stdout}");
    assert!(stdout.contains("validation accuracy"), "{stdout}");
    let a = std::fs::read(dir.join("model.json")).unwrap();
    let b = std::fs::read(dir.join("model_again.json")).unwrap();
    assert_eq!(a, b, "training is not reproducible");
}

#[test]
fn train_with_zero_epochs_checkpoints_the_initialized_model() {
    let dir = fixture();
    run_ok(
        dir,
        &[
            "train",
            "--config",
            "experiment.cfg",
            "--data",
            "train.csv",
            "--epochs",
            "0",
            "--out",
            "untrained.json",
        ],
    );
    assert!(dir.join("untrained.json").exists());
}

#[test]
fn train_fails_on_a_missing_input_file() {
    let dir = fixture();
    assert_fails(
        dir,
        &[
            "train",
            "--config",
            "experiment.cfg",
            "--data",
            "no_such.csv",
            "--out",
            "x.json",
        ],
    );
}

#[test]
fn train_rejects_unknown_config_keys() {
    let dir = fixture();
    std::fs::write(dir.join("bad.cfg"), "classes = 3\nturbo = on\n").unwrap();
    let stderr = assert_fails(dir, &["train", "--config", "bad.cfg", "--out", "x.json"]);
    assert!(stderr.contains("turbo"), "{stderr}");
}

#[test]
fn stream_emits_a_report_with_and_without_adaptation() {
    let dir = fixture();
    let frozen = run_ok(
        dir,
        &[
            "stream",
            "--config",
            "experiment.cfg",
            "stream.csv",
            "--checkpoint",
            "model.json",
            "--train",
            "train.csv",
            "--out",
            "baseline.csv",
        ],
    );
    assert!(frozen.contains("average prequential accuracy"), "{frozen}");
    let adapted = run_ok(
        dir,
        &[
            "stream",
            "--config",
            "experiment.cfg",
            "stream.csv",
            "--checkpoint",
            "model.json",
            "--train",
            "train.csv",
            "--adapt",
            "--out",
            "adapted.csv",
        ],
    );
    assert!(
        adapted.contains("average prequential accuracy"),
        "{adapted}"
    );

    for name in ["baseline.csv", "adapted.csv"] {
        let content = std::fs::read_to_string(dir.join(name)).unwrap();
        assert!(content.starts_with("chunk,n,accuracy"), "{name}: {content}");
        let rows = content
            .lines()
            .filter(|l| !l.starts_with(['c', '#']))
            .count();
        assert_eq!(rows, 3, "{name} should hold 3 chunk rows");
    }
}

#[test]
fn stream_fails_when_the_stream_is_too_short() {
    let dir = fixture();
    let stderr = assert_fails(
        dir,
        &[
            "stream",
            "--config",
            "experiment.cfg",
            "stream.csv",
            "--checkpoint",
            "model.json",
            "--train",
            "train.csv",
            "--n-chunks",
            "50",
        ],
    );
    assert!(stderr.contains("chunk"), "{stderr}");
}

#[test]
fn compare_prints_zero_deltas_for_identical_reports() {
    let dir = fixture();
    let report = "chunk,n,accuracy,retrain_seconds,inference_seconds\n\
                  1,100,0.900000,0.000,0.001\n\
                  2,100,0.850000,0.100,0.001\n\
                  # average_accuracy=0.875000\n";
    std::fs::write(dir.join("r1.csv"), report).unwrap();
    std::fs::write(dir.join("r2.csv"), report).unwrap();
    let stdout = run_ok(dir, &["compare", "r1.csv", "r2.csv", "--out", "deltas.csv"]);
    assert!(stdout.contains("average delta +0.0000"), "{stdout}");
    let deltas = std::fs::read_to_string(dir.join("deltas.csv")).unwrap();
    assert!(deltas.starts_with("chunk,acc_a,acc_b,delta\n"), "{deltas}");
    assert!(
        deltas.lines().skip(1).all(|l| l.ends_with("0.000000")),
        "{deltas}"
    );
}

#[test]
fn compare_surfaces_a_known_delta() {
    let dir = fixture();
    let a = "chunk,n,accuracy,retrain_seconds,inference_seconds\n1,100,0.871000,0.0,0.0\n\
             # average_accuracy=0.871000\n";
    let b = "chunk,n,accuracy,retrain_seconds,inference_seconds\n1,100,0.850000,0.0,0.0\n\
             # average_accuracy=0.850000\n";
    std::fs::write(dir.join("ra.csv"), a).unwrap();
    std::fs::write(dir.join("rb.csv"), b).unwrap();
    let stdout = run_ok(dir, &["compare", "ra.csv", "rb.csv"]);
    assert!(stdout.contains("+0.0210"), "{stdout}");
}

#[test]
fn compare_rejects_mismatched_chunk_counts() {
    let dir = fixture();
    let a = "chunk,n,accuracy,retrain_seconds,inference_seconds\n1,100,0.9,0.0,0.0\n\
             # average_accuracy=0.900000\n";
    let b = "chunk,n,accuracy,retrain_seconds,inference_seconds\n1,100,0.9,0.0,0.0\n2,100,0.8,0.0,0.0\n\
             # average_accuracy=0.850000\n";
    std::fs::write(dir.join("short.csv"), a).unwrap();
    std::fs::write(dir.join("long.csv"), b).unwrap();
    assert_fails(dir, &["compare", "short.csv", "long.csv"]);
}

#[test]
fn drift_feels_no_shift_between_a_file_and_itself() {
    let dir = fixture();
    let stdout = run_ok(dir, &["drift", "train.csv", "train.csv"]);
    assert!(stdout.contains("ks statistic 0.000000"), "{stdout}");
    assert!(stdout.contains("verdict: no shift"), "{stdout}");
}

#[test]
fn drift_flags_the_shifted_domain() {
    let dir = fixture();
    let stdout = run_ok(dir, &["drift", "train.csv", "stream.csv"]);
    assert!(stdout.contains("verdict: shift"), "{stdout}");
}

#[test]
fn drift_rejects_an_invalid_alpha() {
    let dir = fixture();
    let stderr = assert_fails(dir, &["drift", "train.csv", "train.csv", "--alpha", "2"]);
    assert!(stderr.contains("alpha"), "{stderr}");
}

#[test]
fn bench_supports_single_repeat_and_inference_only() {
    let dir = fixture();
    let stdout = run_ok(
        dir,
        &[
            "bench",
            "--config",
            "experiment.cfg",
            "stream.csv",
            "--checkpoint",
            "model.json",
            "--repeat",
            "1",
            "--inference-only",
        ],
    );
    assert!(stdout.contains("single measurement"), "{stdout}");
    assert!(!stdout.contains('±'), "{stdout}");
    assert!(!stdout.contains("retrain episode"), "{stdout}");
}
