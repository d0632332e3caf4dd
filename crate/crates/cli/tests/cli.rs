//! End-to-end exercises of the `trajinf` binary: file formats, exit codes,
//! and rerun determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_trajinf")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("trajinf-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn trajinf")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_writes_expected_shape_and_reruns_byte_identical() {
    let dir = scratch("generate");
    let cfg = write_config(&dir, "s1.cfg", "family = S1\n");
    let d1 = dir.join("a.ds");
    let d2 = dir.join("b.ds");
    assert_ok(&run(&["generate", "--config", p(&cfg), "--out", p(&d1), "--seed", "0"]));
    assert_ok(&run(&["generate", "--config", p(&cfg), "--out", p(&d2), "--seed", "0"]));

    let text = fs::read_to_string(&d1).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("dataset version=1 family=S1 n_x=2 n_u=1 n=30 seed=0"));
    assert!(lines[1].starts_with("system kind=linear"));
    let train = lines.iter().filter(|l| l.contains("split=train")).count();
    let test = lines.iter().filter(|l| l.contains("split=test")).count();
    assert_eq!(train, 30);
    assert_eq!(test, 6);
    assert!(text.contains(" t=25 "));

    assert_eq!(fs::read(&d1).unwrap(), fs::read(&d2).unwrap());

    // Different seed, different bytes.
    let d3 = dir.join("c.ds");
    assert_ok(&run(&["generate", "--config", p(&cfg), "--out", p(&d3), "--seed", "1"]));
    assert_ne!(fs::read(&d1).unwrap(), fs::read(&d3).unwrap());
}

#[test]
fn dataset_write_read_write_is_byte_identical() {
    let dir = scratch("roundtrip");
    let cfg = write_config(&dir, "s4.cfg", "family = S4\nn_traj = 6\nt_len = 8\n");
    let ds = dir.join("arm.ds");
    assert_ok(&run(&["generate", "--config", p(&cfg), "--out", p(&ds), "--seed", "5"]));
    let original = fs::read_to_string(&ds).unwrap();
    let stored = trajinf_cli::io::read_dataset(&ds).unwrap();
    let family = stored.family;
    let rewritten = trajinf_cli::io::render_dataset(family, &stored.into_generated());
    assert_eq!(rewritten, original);
}

#[test]
fn influence_reports_are_deterministic_and_count_records() {
    let dir = scratch("influence");
    let cfg = write_config(&dir, "s1.cfg", "family = S1\nn_traj = 12\nt_len = 15\n");
    let ds = dir.join("d.ds");
    assert_ok(&run(&["generate", "--config", p(&cfg), "--out", p(&ds), "--seed", "3"]));

    let r1 = dir.join("r1.rep");
    let r2 = dir.join("r2.rep");
    assert_ok(&run(&["influence", "--config", p(&cfg), "--data", p(&ds), "--out", p(&r1)]));
    assert_ok(&run(&[
        "influence", "--config", p(&cfg), "--data", p(&ds), "--out", p(&r2), "--threads", "1",
    ]));
    // Thread count must not leak into the scores.
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());

    let text = fs::read_to_string(&r1).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("record ")).count(), 12);
    assert!(text.contains("counters hessian_factorizations=1 adjoint_lyap_solves=1"));
    assert!(trajinf_cli::io::timings_path(&r1).exists());

    let (_, report) = trajinf_cli::io::read_report(&r1).unwrap();
    let rerendered = trajinf_cli::io::render_report(trajinf_bench::Family::S1, &report);
    assert_eq!(rerendered, text);
}

#[test]
fn zero_initial_state_covariance_zeroes_every_control_score() {
    let dir = scratch("sigma0");
    let cfg = write_config(
        &dir,
        "s1.cfg",
        "family = S1\nn_traj = 8\nt_len = 12\nsigma0_diag = 0\n",
    );
    let ds = dir.join("d.ds");
    let rep = dir.join("r.rep");
    assert_ok(&run(&["generate", "--config", p(&cfg), "--out", p(&ds), "--seed", "1"]));
    assert_ok(&run(&["influence", "--config", p(&cfg), "--data", p(&ds), "--out", p(&rep)]));
    let (_, report) = trajinf_cli::io::read_report(&rep).unwrap();
    assert_eq!(report.records.len(), 8);
    for rec in &report.records {
        assert_eq!(rec.if2, Some(0.0));
        assert_eq!(rec.grad_only_j, Some(0.0));
        assert!(rec.if1.is_finite());
    }
}

#[test]
fn evaluate_writes_the_metric_grid() {
    let dir = scratch("evaluate");
    let cfg = write_config(&dir, "s1.cfg", "family = S1\nn_traj = 12\nt_len = 15\n");
    let ds = dir.join("d.ds");
    let rep = dir.join("r.rep");
    let tru = dir.join("t.tru");
    let csv = dir.join("m.csv");
    assert_ok(&run(&["generate", "--config", p(&cfg), "--out", p(&ds), "--seed", "2"]));
    assert_ok(&run(&["influence", "--config", p(&cfg), "--data", p(&ds), "--out", p(&rep)]));
    assert_ok(&run(&["loto", "--config", p(&cfg), "--data", p(&ds), "--out", p(&tru)]));
    let out = run(&["evaluate", "--report", p(&rep), "--truth", p(&tru), "--out", p(&csv)]);
    assert_ok(&out);

    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("pearson"), "{stdout}");

    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "system,target,method,pearson,spearman,mae,topk,time_s,speedup"
    );
    let body: Vec<&str> = lines.collect();
    assert!(body.iter().any(|l| l.starts_with("S1,pred_loss,if1,")));
    assert!(body.iter().any(|l| l.starts_with("S1,nominal_j,if2,")));
    assert!(!body.iter().any(|l| l.contains("plant_cost")));

    // Retraining graded against itself is a perfect predictor.
    let retrain: Vec<&&str> = body
        .iter()
        .filter(|l| l.contains(",retraining,"))
        .collect();
    assert!(!retrain.is_empty());
    for line in retrain {
        let cells: Vec<&str> = line.split(',').collect();
        assert!((cells[3].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cells[5].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn failures_use_the_exit_code_contract() {
    let dir = scratch("exitcodes");

    // Config class: unknown key, with its line number in the message.
    let bad_key = write_config(&dir, "bad_key.cfg", "family = S1\nn_trajectories = 9\n");
    let out = run(&["generate", "--config", p(&bad_key), "--out", p(&dir.join("x"))]);
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    // Config class: schema-valid syntax, invalid value.
    let bad_val = write_config(&dir, "bad_val.cfg", "family = S1\nn_traj = 0\n");
    assert_exit(
        &run(&["generate", "--config", p(&bad_val), "--out", p(&dir.join("x"))]),
        2,
    );

    // Config class: dataset/config family disagreement.
    let s1 = write_config(&dir, "s1.cfg", "family = S1\nn_traj = 8\nt_len = 10\n");
    let s2 = write_config(&dir, "s2.cfg", "family = S2\n");
    let ds = dir.join("d.ds");
    assert_ok(&run(&["generate", "--config", p(&s1), "--out", p(&ds), "--seed", "0"]));
    assert_exit(
        &run(&["influence", "--config", p(&s2), "--data", p(&ds), "--out", p(&dir.join("x"))]),
        2,
    );

    // Data class: missing and corrupted inputs.
    assert_exit(
        &run(&["influence", "--config", p(&s1), "--data", p(&dir.join("nope")), "--out", p(&dir.join("x"))]),
        3,
    );
    let garbled = dir.join("garbled.ds");
    fs::write(&garbled, "dataset version=1 family=S1 n_x=2 n_u=1 n=4 seed=0\nnot a record\n").unwrap();
    assert_exit(
        &run(&["influence", "--config", p(&s1), "--data", p(&garbled), "--out", p(&dir.join("x"))]),
        3,
    );

    // Data class: wrong file kind.
    assert_exit(
        &run(&["evaluate", "--report", p(&ds), "--truth", p(&ds), "--out", p(&dir.join("x"))]),
        3,
    );
}

#[test]
fn truncated_float_payload_is_a_data_error() {
    let dir = scratch("truncated");
    let cfg = write_config(&dir, "s1.cfg", "family = S1\nn_traj = 8\nt_len = 10\n");
    let ds = dir.join("d.ds");
    assert_ok(&run(&["generate", "--config", p(&cfg), "--out", p(&ds), "--seed", "0"]));
    let text = fs::read_to_string(&ds).unwrap();
    let broken = text.replacen("e0", "e999", 1);
    assert_ne!(text, broken);
    let bad = dir.join("broken.ds");
    fs::write(&bad, broken).unwrap();
    assert_exit(
        &run(&["influence", "--config", p(&cfg), "--data", p(&bad), "--out", p(&dir.join("x"))]),
        3,
    );
}

#[test]
fn ablate_sweeps_the_grid_and_records_per_cell_errors() {
    let dir = scratch("ablate");

    // A clean three-point ridge sweep: 3 cells x 9 (target, method) rows.
    let sweep = write_config(
        &dir,
        "sweep.cfg",
        "family = S1\nn_traj = 10\nt_len = 12\nseeds = 0\nablate_param = lambda\nablate_values = 1e-7, 1e-5, 1e-3\n",
    );
    let csv = dir.join("sweep.csv");
    assert_ok(&run(&["ablate", "--config", p(&sweep), "--out", p(&csv)]));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "family,param,value,seed,target,method,pearson,spearman,mae,topk,time_s,speedup,error"
    );
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 27);
    assert!(body.iter().all(|l| l.starts_with("S1,lambda,")));
    assert!(body.iter().all(|l| l.ends_with(',')), "no cell errors expected");

    // A sweep where one cell cannot run: arm dynamics reject the mismatch
    // knob, the linear zero-mismatch cell still succeeds, so the command
    // exits 0 and the bad cell carries its error in the last column.
    let mixed = write_config(
        &dir,
        "mixed.cfg",
        "family = S4\nn_traj = 8\nt_len = 15\nseeds = 0\nplant_horizon = 120\nplant_rollouts = 16\nablate_param = mismatch\nablate_values = 0, 0.02\n",
    );
    let csv2 = dir.join("mixed.csv");
    assert_ok(&run(&["ablate", "--config", p(&mixed), "--out", p(&csv2)]));
    let text2 = fs::read_to_string(&csv2).unwrap();
    let good: Vec<&str> = text2.lines().skip(1).filter(|l| l.ends_with(',')).collect();
    let bad: Vec<&str> = text2
        .lines()
        .skip(1)
        .filter(|l| !l.ends_with(','))
        .collect();
    assert!(!good.is_empty());
    assert_eq!(bad.len(), 1);
    assert!(bad[0].starts_with("S4,mismatch,0.02,0,,,"), "{}", bad[0]);
}

#[test]
fn ground_truth_files_round_trip() {
    let dir = scratch("truth");
    let cfg = write_config(&dir, "s1.cfg", "family = S1\nn_traj = 8\nt_len = 10\n");
    let ds = dir.join("d.ds");
    let tru = dir.join("t.tru");
    assert_ok(&run(&["generate", "--config", p(&cfg), "--out", p(&ds), "--seed", "0"]));
    assert_ok(&run(&["loto", "--config", p(&cfg), "--data", p(&ds), "--out", p(&tru)]));
    let text = fs::read_to_string(&tru).unwrap();
    let (family, truth) = trajinf_cli::io::read_truth(&tru).unwrap();
    assert_eq!(truth.records.len(), 8);
    assert_eq!(trajinf_cli::io::render_truth(family, &truth), text);
}
