//! End-to-end behaviour of the `aspects` binary: exit codes, diagnostic
//! routing, and the exact stdout lines scripts are allowed to depend on.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use aspects_core::io::{write_score_table, write_volume};
use aspects_core::phantom::{default_plan, make_anatomy, make_infarct, PhantomSpec};
use aspects_core::{Dims, ScorePair, ScorePairTable, Spacing, VoxelGrid};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_aspects")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Builds anatomy.mha + infarct.mha under `dir` and returns their paths.
fn phantom_files(dir: &Path, seed: &str, extra: &[&str]) -> (String, String) {
    let out_dir = dir.join(format!("ph{seed}"));
    let mut args = vec![
        "phantom",
        "--seed",
        seed,
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "phantom failed: {}", stderr(&out));
    (
        out_dir.join("anatomy.mha").to_string_lossy().into_owned(),
        out_dir.join("infarct.mha").to_string_lossy().into_owned(),
    )
}

/// Probability volume that mirrors a mask: high inside, low outside.
fn write_soft_mask(dir: &Path, name: &str, seed: u64) -> (String, String) {
    let spec = PhantomSpec::new(seed).with_plan(default_plan());
    let anatomy = make_anatomy(&spec).unwrap();
    let (mask, _) = make_infarct(&spec, &anatomy).unwrap();
    let probs: Vec<f32> = mask
        .data()
        .iter()
        .map(|&v| if v != 0 { 0.9 } else { 0.08 })
        .collect();
    let grid = VoxelGrid::new(mask.dims(), mask.spacing(), probs).unwrap();
    let prob_path = dir.join(format!("{name}_prob.mha"));
    let gt_path = dir.join(format!("{name}_gt.mha"));
    write_volume(&grid, &prob_path).unwrap();
    write_volume(mask.grid(), &gt_path).unwrap();
    (
        prob_path.to_string_lossy().into_owned(),
        gt_path.to_string_lossy().into_owned(),
    )
}

#[test]
fn score_reports_clean_scan_as_ten_c() {
    let dir = tempfile::tempdir().unwrap();
    let (anatomy, infarct) = phantom_files(dir.path(), "7", &["--plan", "[]"]);
    let out = run(&["score", "--infarct", &infarct, "--anatomy", &anatomy]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("score: 10/10, bin: C (8-10)"), "got:\n{text}");
    assert!(text.contains("volume: 0 ml"), "got:\n{text}");
}

#[test]
fn score_rejects_mismatched_grids_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (anatomy, _) = phantom_files(dir.path(), "3", &[]);
    let (_, infarct) = phantom_files(dir.path(), "4", &["--dims", "16x16x8"]);
    let out = run(&["score", "--infarct", &infarct, "--anatomy", &anatomy]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("error:"),
        "diagnostic goes to stderr: {}",
        stderr(&out)
    );
}

#[test]
fn score_rejects_missing_file_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (anatomy, _) = phantom_files(dir.path(), "5", &[]);
    let out = run(&["score", "--infarct", "/nonexistent/x.mha", "--anatomy", &anatomy]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    // clap rejects the missing required arguments
    let out = run(&["score"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["eval-seg"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn phantom_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = run(&["phantom", "--seed", "11", "--out-dir", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
    }
    for name in ["anatomy.mha", "infarct.mha", "expected_report.json"] {
        let left = fs::read(a.join(name)).unwrap();
        let right = fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
    }
}

#[test]
fn phantom_rejects_undersized_dims_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "phantom",
        "--out-dir",
        dir.path().join("tiny").to_str().unwrap(),
        "--dims",
        "3x3x2",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_seg_perfect_prediction_scores_dice_one() {
    let dir = tempfile::tempdir().unwrap();
    let (_, infarct) = phantom_files(dir.path(), "21", &[]);
    let out = run(&["eval-seg", "--pred", &infarct, "--gt", &infarct]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("mean dice: 1.0000"), "got:\n{text}");
    assert!(text.contains("mean sensitivity: 1.0000"), "got:\n{text}");
}

#[test]
fn eval_seg_rejects_unbalanced_lists_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (_, infarct) = phantom_files(dir.path(), "22", &[]);
    let out = run(&["eval-seg", "--pred", &infarct, "--gt", &infarct, &infarct]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("same number"),
        "got: {}",
        stderr(&out)
    );
}

#[test]
fn agreement_on_identical_columns_is_total() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<ScorePair> = [3u8, 7, 9, 5]
        .iter()
        .enumerate()
        .map(|(i, &s)| ScorePair {
            scan_id: format!("s{i}"),
            score_a: s,
            score_b: s,
        })
        .collect();
    let path = dir.path().join("same.csv");
    write_score_table(&ScorePairTable::new(rows).unwrap(), &path).unwrap();

    let out = run(&["agreement", "--table", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("exact agreement: 100.00%"), "got:\n{text}");
    assert!(text.contains("within 2 points: 100.00%"), "got:\n{text}");
    assert!(text.contains("pearson r: 1.0000"), "got:\n{text}");
}

#[test]
fn agreement_on_single_row_reports_undefined_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![ScorePair {
        scan_id: "only".into(),
        score_a: 4,
        score_b: 6,
    }];
    let path = dir.path().join("one.csv");
    write_score_table(&ScorePairTable::new(rows).unwrap(), &path).unwrap();

    let out = run(&["agreement", "--table", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(
        stdout(&out).contains("pearson r: undefined"),
        "got:\n{}",
        stdout(&out)
    );
}

#[test]
fn agreement_rejects_malformed_csv_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "id,left,right\nx,1,2\n").unwrap();
    let out = run(&["agreement", "--table", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn loss_check_passes_and_prints_default_weights() {
    let dir = tempfile::tempdir().unwrap();
    let (prob, gt) = write_soft_mask(dir.path(), "ok", 31);
    let out = run(&["loss-check", "--prob", &prob, "--gt", &gt]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("weights: (3, 1, 1)"), "got:\n{text}");
    assert!(text.contains("gradient check: PASS"), "got:\n{text}");
    for label in ["L1 (focal):", "L2 (boundary):", "L3 (dice):", "L (combined):"] {
        assert!(text.contains(label), "missing {label} in:\n{text}");
    }
}

#[test]
fn loss_check_detects_seeded_gradient_fault_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let (prob, gt) = write_soft_mask(dir.path(), "bad", 32);
    let out = run(&["loss-check", "--prob", &prob, "--gt", &gt, "--corrupt-gradient"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stdout(&out).contains("gradient check: FAIL"),
        "got:\n{}",
        stdout(&out)
    );
}

#[test]
fn loss_check_reports_uniform_reference_as_degenerate_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let dims = Dims::new(8, 8, 4).unwrap();
    let spacing = Spacing::isotropic(1.0).unwrap();
    let ones = VoxelGrid::fill(dims, spacing, 1u8);
    let probs = VoxelGrid::fill(dims, spacing, 0.5f32);
    let gt_path = dir.path().join("uniform.mha");
    let prob_path = dir.path().join("prob.mha");
    write_volume(&ones, &gt_path).unwrap();
    write_volume(&probs, &prob_path).unwrap();

    let out = run(&[
        "loss-check",
        "--prob",
        prob_path.to_str().unwrap(),
        "--gt",
        gt_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(
        stderr(&out).contains("error:"),
        "got: {}",
        stderr(&out)
    );
}

#[test]
fn score_json_matches_phantom_promise() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("case");
    let out = run(&["phantom", "--seed", "77", "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success());

    let report = dir.path().join("report.json");
    let out = run(&[
        "score",
        "--infarct",
        out_dir.join("infarct.mha").to_str().unwrap(),
        "--anatomy",
        out_dir.join("anatomy.mha").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let got = fs::read(&report).unwrap();
    let want = fs::read(out_dir.join("expected_report.json")).unwrap();
    assert_eq!(got, want, "scored report differs from the phantom's promise");
}
