use std::path::Path;
use std::process::{Command, Output};

use negcov::csvio;

fn negcov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_negcov")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn theory_writes_csv_and_reports_argmin() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("theory.csv");
    let o = negcov(&["theory", "--n", "100", "--k", "1..500", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("argmin_k alpha = 103"));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# schema=v1\n"));
    let t = csvio::read(&out).unwrap();
    assert_eq!(t.rows.len(), 500);
    assert_eq!(t.header.join(","), negcov::theory::THEORY_HEADER);
}

#[test]
fn theory_rejects_bad_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    for k in ["5..1", "0..3", "x"] {
        let o = negcov(&["theory", "--n", "10", "--k", k, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "k = {k}");
    }
    let o = negcov(&["theory", "--n", "1", "--k", "1..3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn example_rejects_large_epsilon_with_interval() {
    let o = negcov(&["example", "--epsilon", "0.5", "--k-max", "10", "--samples", "100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("0.366"), "{}", stderr(&o));
}

#[test]
fn example_small_scan() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig.csv");
    let o = negcov(&[
        "example", "--n", "8", "--k-max", "20", "--samples", "5000", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = csvio::read(&out).unwrap();
    assert_eq!(t.header.join(","), negcov::example::FIGURE2_HEADER);
    assert_eq!(t.rows.len(), negcov::example::scan_ks(8, 20).len());
}

#[test]
fn verify_passes() {
    let o = negcov(&["verify", "--instances", "20", "--coupon-trials", "500"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("transfer bound: 40 / 40 hold"));
}

#[test]
fn train_runs_on_tiny_corpus() {
    let o = negcov(&[
        "train", "--n", "3", "--sentences-per-class", "20", "--vocab-per-class", "20", "--shared-vocab", "3",
        "--b", "4", "--k", "3", "--dim", "4", "--nce-epochs", "2", "--head-epochs", "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("mean classifier accuracy"));
}

#[test]
fn train_collision_free_infeasible_fails() {
    // With B = 2 each pair has only the other pair's two slots; k = 50 cannot be met.
    let o = negcov(&[
        "train", "--n", "2", "--sentences-per-class", "10", "--vocab-per-class", "10", "--shared-vocab", "2",
        "--b", "2", "--k", "50", "--collision-free", "--dim", "2", "--nce-epochs", "1", "--head-epochs", "1",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_corpus_is_io_error() {
    let o = negcov(&["train", "--corpus", "/nonexistent/corpus.tsv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_and_summary_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let conf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.conf");
    let out = dir.path().join("sweep.csv");
    let summary = dir.path().join("summary.csv");
    let o = negcov(&["sweep", "--config", conf.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = csvio::read(&out).unwrap();
    assert_eq!(t.header.len(), negcov::sweep::SWEEP_HEADER.len());
    let o = negcov(&[
        "sweep", "--from-csv", out.to_str().unwrap(), "--summary-out", summary.to_str().unwrap(),
        "--normalize", "global",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(csvio::read(&summary).is_ok());
}

#[test]
fn sweep_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "[grid]\nn = 4\nbogus = 1\n").unwrap();
    let o = negcov(&["sweep", "--config", conf.to_str().unwrap(), "--out", dir.path().join("s.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(negcov(&["theory", "--bogus"]).status.code(), Some(2));
}
