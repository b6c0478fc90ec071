use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stlt_cli::{RunConfig, HISTORY_HEADER};
use stlt_core::io;

fn stlt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stlt")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &[
    "complete", "--dims", "10,10,3", "--constraint", "nonneg", "--true-rank", "2,2,1", "--rank", "3,3,2", "--fraction", "0.3",
    "--seed", "4", "--max-iters", "40",
];

#[test]
fn complete_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = stlt(&[SMALL, &["--out", "run"]].concat(), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = dir.path().join("run");

    let csv = fs::read_to_string(run.join("history.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(HISTORY_HEADER));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), 7);
        assert_eq!(r[0], i as f64);
        assert!(r[2] >= 0.0 && r[4] >= -1e-8);
        assert_eq!(r[6], 0.0);
    }

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["iterations"].as_u64().unwrap() as usize + 1, rows.len());
    assert!(manifest["config"]["lambda"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["config"]["cost_c"].as_f64(), Some(1.0));
    assert!(manifest["recovery"]["rmse_test"].as_f64().is_some());
    assert_eq!(manifest["solver"], "rcg");

    let w = io::read_sparse(run.join("W_hat.tns")).unwrap();
    assert_eq!(w.nnz(), 300);
    assert!(w.values().iter().all(|v| *v >= -1e-9));

    for plot in ["grad_norm.svg", "rel_gap.svg"] {
        let svg = fs::read_to_string(run.join("plots").join(plot)).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&stlt(&[SMALL, &["--out", "a"]].concat(), dir.path())), 0);
    let o = stlt(&["complete", "--config", "a/manifest.json", "--out", "b"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["history.csv", "W_hat.tns"] {
        assert_eq!(fs::read(dir.path().join("a").join(name)).unwrap(), fs::read(dir.path().join("b").join(name)).unwrap());
    }
    let cfg = RunConfig::from_json_file(&dir.path().join("b/manifest.json")).unwrap();
    assert_eq!(cfg.ranks, vec![3, 3, 2]);
}

#[test]
fn input_file_round_trip_with_eval() {
    let dir = tempfile::tempdir().unwrap();
    let o = stlt(&["synth", "--synth-kind", "nonneg", "--dims", "8,8,3", "--true-rank", "2,2,1", "--fraction", "0.4", "--seed", "2", "--out", "d"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again = stlt(&["synth", "--synth-kind", "nonneg", "--dims", "8,8,3", "--true-rank", "2,2,1", "--fraction", "0.4", "--seed", "2", "--out", "e"], dir.path());
    assert_eq!(code(&again), 0);
    assert_eq!(fs::read(dir.path().join("d/observed.tns")).unwrap(), fs::read(dir.path().join("e/observed.tns")).unwrap());

    let o = stlt(
        &["complete", "--input", "d/observed.tns", "--truth", "d/truth.tns", "--constraint", "nonneg", "--rank", "2,2,1", "--lambda", "3", "--out", "r"],
        dir.path(),
    );
    assert!(matches!(code(&o), 0 | 2), "{}", stderr(&o));

    let o = stlt(&["eval", "--w-hat", "d/truth.tns", "--truth", "d/truth.tns", "--observed", "d/observed.tns"], dir.path());
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["rmse_test"].as_f64(), Some(0.0));
    assert_eq!(m["rmse_train"].as_f64(), Some(0.0));

    let truth = io::read_dense(dir.path().join("d/truth.tns")).unwrap();
    let zero = stlt_core::DenseTensor::zeros(truth.dims()).unwrap();
    io::write_dense(dir.path().join("zero.tns"), &zero).unwrap();
    let o = stlt(&["eval", "--w-hat", "zero.tns", "--truth", "d/truth.tns", "--observed", "d/observed.tns"], dir.path());
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["rmse_test"], m["rms_truth_test"]);

    let o = stlt(&["eval", "--w-hat", "r/W_hat.tns", "--truth", "d/truth.tns", "--observed", "d/observed.tns"], dir.path());
    assert_eq!(code(&o), 0);
    let o = stlt(&["eval", "--w-hat", "zero.tns", "--truth", "d/truth.tns", "--observed", "r/W_hat.tns"], dir.path());
    assert_eq!(code(&o), 0);
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.tns"), "dims 3 3\n").unwrap();
    let o = stlt(&["complete", "--input", "empty.tns", "--rank", "1,1"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));

    let o = stlt(&["complete", "--dims", "6,6", "--rank", "2,2", "--constraint", "hankel"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("tau"));

    let o = stlt(&["complete", "--input", "missing.tns", "--rank", "1,1"], dir.path());
    assert_eq!(code(&o), 1);

    fs::write(dir.path().join("bad.json"), r#"{"ranks": [1, 1], "colour": "red"}"#).unwrap();
    let o = stlt(&["complete", "--config", "bad.json"], dir.path());
    assert_eq!(code(&o), 1);

    let o = stlt(&["complete", "--dims", "6,6", "--rank", "7,2"], dir.path());
    assert_eq!(code(&o), 1);

    fs::write(dir.path().join("t.tns"), "dims 2 2\n1 1 1.0\n3 1 2.0\n").unwrap();
    let o = stlt(&["eval", "--w-hat", "t.tns", "--truth", "t.tns", "--observed", "t.tns"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn unfinished_runs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = stlt(&["complete", "--dims", "10,10,3", "--rank", "3,3,2", "--fraction", "0.3", "--max-iters", "2", "--out", "r"], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "max_iterations");
    assert_eq!(manifest["exit_code"], 2);
}

#[test]
fn check_derivs_passes_on_toys() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["check-derivs", "--dims", "4,5,3", "--rank", "2,2,1", "--fraction", "0.5", "--lambda", "5"],
        &["check-derivs", "--dims", "4,5,3", "--rank", "2,2,1", "--fraction", "0.5", "--lambda", "0"],
        &["check-derivs", "--dims", "12", "--constraint", "hankel", "--tau", "4", "--rank", "9", "--fraction", "0.75", "--lambda", "2"],
        &["check-derivs", "--dims", "4,3,3", "--constraint", "nonneg", "--rank", "2,2,2", "--fraction", "0.5", "--lambda", "5"],
    ];
    for args in cases {
        let o = stlt(args, dir.path());
        let out = String::from_utf8_lossy(&o.stdout);
        assert_eq!(code(&o), 0, "{args:?}: {out}{}", stderr(&o));
        assert!(out.contains("gradient") && out.contains("pass"));
    }
}

#[test]
fn jobs_fan_out_matches_sequential_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfgs = Vec::new();
    for (i, kind) in ["none", "nonneg"].iter().enumerate() {
        let cfg = format!(
            r#"{{"synthetic": {{"kind": "{}", "dims": [8, 8, 3], "ranks": [2, 2, 1], "fraction": 0.4, "seed": {i}}},
                "constraint": "{kind}", "ranks": [2, 2, 1], "max_iters": 15, "out": "job{i}"}}"#,
            if *kind == "none" { "gaussian" } else { "nonneg" }
        );
        let name = format!("c{i}.json");
        fs::write(dir.path().join(&name), cfg).unwrap();
        cfgs.push(name);
    }
    let o = stlt(&["complete", "--config", &cfgs[0], "--config", &cfgs[1], "--jobs", "2"], dir.path());
    assert!(matches!(code(&o), 0 | 2), "{}", stderr(&o));
    for (i, c) in cfgs.iter().enumerate() {
        let o = stlt(&["complete", "--config", c, "--out", &format!("seq{i}")], dir.path());
        assert!(matches!(code(&o), 0 | 2));
        assert_eq!(
            fs::read(dir.path().join(format!("job{i}/history.csv"))).unwrap(),
            fs::read(dir.path().join(format!("seq{i}/history.csv"))).unwrap()
        );
    }
    let o = stlt(&["complete", "--config", &cfgs[0], "--config", &cfgs[1], "--out", "x"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn wall_time_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let o = stlt(&[SMALL, &["--out", "w", "--record-wall-time"]].concat(), dir.path());
    assert!(matches!(code(&o), 0 | 2));
    let csv = fs::read_to_string(dir.path().join("w/history.csv")).unwrap();
    assert!(csv.lines().skip(1).any(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap() > 0.0));
}
