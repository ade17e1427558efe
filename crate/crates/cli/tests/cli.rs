use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn radwalk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radwalk"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RADWALK_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn validate_headline_model_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = radwalk(&["validate", "--d", "2", "--U", "1", "--V", "3", "--directory", "v"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&tmp.path().join("v/validation.json"));
    assert_eq!(report["pass"], true);
    assert!(report["max_radial_dev"].as_f64().unwrap() <= 1e-10);
    assert!(report["max_trace_dev"].as_f64().unwrap() <= 1e-10);
    let manifest = read_json(&tmp.path().join("v/manifest.json"));
    assert_eq!(manifest["pass"], true);
    assert_eq!(manifest["command"], "validate");
}

#[test]
fn failed_criterion_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = radwalk(&["validate", "--d", "3", "--V", "2.5", "--tol", "0", "--directory", "v"], tmp.path());
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert_eq!(read_json(&tmp.path().join("v/manifest.json"))["pass"], false);
}

#[test]
fn config_errors_exit_two_with_line_and_field() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.cfg"), "command = validate\n[model]\nd = 2\nV = 0.5\n").unwrap();
    let out = radwalk(&["run", "--config", "bad.cfg"], tmp.path());
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("line 4") && msg.contains("model.V"), "{msg}");

    let out = radwalk(&["validate", "--noise", "cauchy"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("model.noise"));

    let out = radwalk(&["no-such-command"], tmp.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn numerical_abort_exits_three_with_index_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = radwalk(
        &["simulate", "--perturb_c", "1e300", "--N_traj", "3", "--N_steps", "5", "--directory", "s"],
        tmp.path(),
    );
    assert_eq!(code(&out), 3);
    let msg = stderr(&out);
    let manifest = read_json(&tmp.path().join("s/manifest.json"));
    let seed = manifest["abort"]["sub_seed"].as_u64().unwrap();
    assert_eq!(manifest["abort"]["index"], 0);
    assert!(msg.contains("trajectory 0") && msg.contains(&seed.to_string()), "{msg}");

    let out = radwalk(&["replay", "s/manifest.json", "0"], tmp.path());
    assert_eq!(code(&out), 3);
    assert!(tmp.path().join("s/replay_0_trajectory.csv").exists());
}

fn result_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["--n", "256", "--N_traj", "200", "--grid", "16,64", "--seed", "5"];
    for (workers, dir) in [("1", "w1"), ("4", "w4")] {
        let mut args = vec!["marginal-fit"];
        args.extend(common);
        args.extend(["--workers", workers, "--directory", dir]);
        let out = radwalk(&args, tmp.path());
        assert!(code(&out) <= 1, "{}", stderr(&out));
    }
    let one = result_files(&tmp.path().join("w1"));
    let four = result_files(&tmp.path().join("w4"));
    assert!(one.len() >= 5);
    assert_eq!(one, four);

    let mut m1 = read_json(&tmp.path().join("w1/manifest.json"));
    let mut m4 = read_json(&tmp.path().join("w4/manifest.json"));
    for m in [&mut m1, &mut m4] {
        let obj = m.as_object_mut().unwrap();
        obj.remove("wall_time_seconds");
        obj.remove("config_text");
        obj.remove("config");
    }
    assert_eq!(m1, m4);
}

#[test]
fn jsonl_rows_carry_index_and_sub_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = radwalk(&["compensators", "--n", "64", "--N_traj", "30", "--directory", "c"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest = read_json(&tmp.path().join("c/manifest.json"));
    let seeds = manifest["ensembles"][0]["sub_seeds"].as_array().unwrap().clone();
    let rows = jsonl(&tmp.path().join("c/compensators.jsonl"));
    assert_eq!(rows.len(), 30);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row["index"], i);
        assert_eq!(row["sub_seed"], seeds[i]);
    }
}

#[test]
fn replay_matches_ensemble_summary_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = radwalk(
        &["compensators", "--n", "128", "--N_traj", "10", "--noise", "gaussian", "--directory", "c"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = jsonl(&tmp.path().join("c/compensators.jsonl"));
    for index in [0usize, 7] {
        let out = radwalk(&["replay", "c/manifest.json", &index.to_string(), "--out", "r"], tmp.path());
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let replay = read_json(&tmp.path().join(format!("r/replay_{index}.json")));
        assert_eq!(replay["summary"], rows[index]);
        let track = fs::read_to_string(tmp.path().join(format!("r/replay_{index}_track.csv"))).unwrap();
        assert!(track.starts_with("t,Y,B,A,M\n"));
        assert_eq!(track.lines().count(), 1 + 129);
        let traj = fs::read_to_string(tmp.path().join(format!("r/replay_{index}_trajectory.csv"))).unwrap();
        assert_eq!(traj.lines().count(), 1 + 129);
    }
}

#[test]
fn replay_reproduces_marginal_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let out = radwalk(
        &["marginal-fit", "--n", "100", "--t_eval", "0.37", "--N_traj", "25", "--directory", "m"],
        tmp.path(),
    );
    assert!(code(&out) <= 1, "{}", stderr(&out));
    let samples = jsonl(&tmp.path().join("m/samples.jsonl"));
    let out = radwalk(&["replay", "m/manifest.json", "3"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let replay = read_json(&tmp.path().join("m/replay_3.json"));
    assert_eq!(replay["y_eval"], samples[3]["y"]);
    assert_eq!(replay["sub_seed"], samples[3]["sub_seed"]);
}

#[test]
fn replay_guards() {
    let tmp = tempfile::tempdir().unwrap();
    let out = radwalk(&["simulate", "--N_traj", "4", "--N_steps", "10", "--directory", "s"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = radwalk(&["replay", "s/manifest.json", "4"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("out of range"));

    let mut manifest = read_json(&tmp.path().join("s/manifest.json"));
    manifest["manifest_version"] = Value::from(99);
    fs::write(tmp.path().join("foreign.json"), manifest.to_string()).unwrap();
    let out = radwalk(&["replay", "foreign.json", "0"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("version mismatch"), "{}", stderr(&out));

    let out = radwalk(&["validate", "--directory", "v"], tmp.path());
    assert_eq!(code(&out), 0);
    let out = radwalk(&["replay", "v/manifest.json", "0"], tmp.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn config_echo_reproduces_run() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("exp.cfg"),
        "command = moments\n[model]\nd = 3\nV = 2\nnoise = gaussian\n[run]\nN_traj = 40\ngrid = 16,32,64,128\nseed = 11\n[output]\ndirectory = first\n",
    )
    .unwrap();
    let out = radwalk(&["run", "--config", "exp.cfg"], tmp.path());
    assert!(code(&out) <= 1, "{}", stderr(&out));
    let manifest = read_json(&tmp.path().join("first/manifest.json"));
    let echo = manifest["config_text"].as_str().unwrap();
    fs::write(tmp.path().join("echo.cfg"), echo).unwrap();
    let out = radwalk(&["run", "--config", "echo.cfg", "--directory", "second"], tmp.path());
    assert!(code(&out) <= 1, "{}", stderr(&out));
    assert_eq!(result_files(&tmp.path().join("first")), result_files(&tmp.path().join("second")));
}

#[test]
fn flags_override_file_and_env_sets_directory() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("exp.cfg"), "[model]\nV = 3\n[run]\nN_traj = 7\nN_steps = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_radwalk"))
        .args(["simulate", "--config", "exp.cfg", "--N_traj", "5", "--formats", "jsonl"])
        .current_dir(tmp.path())
        .env("RADWALK_OUT", tmp.path().join("from-env"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let dir = tmp.path().join("from-env");
    assert_eq!(jsonl(&dir.join("endpoints.jsonl")).len(), 5);
    assert!(!dir.join("endpoints.csv").exists());
}

#[test]
fn csv_reals_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = radwalk(&["marginal-fit", "--n", "32", "--N_traj", "20", "--directory", "m"], tmp.path());
    assert!(code(&out) <= 1, "{}", stderr(&out));
    let csv = fs::read_to_string(tmp.path().join("m/samples.csv")).unwrap();
    let rows = jsonl(&tmp.path().join("m/samples.jsonl"));
    for (line, row) in csv.lines().skip(1).zip(&rows) {
        let y: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(y, row["y"].as_f64().unwrap());
    }
}

#[test]
fn phase_expectation_sets_exit_status() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ["phase", "--V", "4", "--N_traj", "20", "--N_steps", "2000", "--radius", "3"];
    let mut args = base.to_vec();
    args.extend(["--expect", "transient-consistent", "--directory", "p"]);
    let out = radwalk(&args, tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut args = base.to_vec();
    args.extend(["--expect", "recurrent-consistent", "--directory", "q"]);
    assert_eq!(code(&radwalk(&args, tmp.path())), 1);
}
