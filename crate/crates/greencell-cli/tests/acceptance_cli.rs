//! Command-line acceptance checks: end-to-end determinism (byte-identical
//! reruns), the artifact bundle, actionable errors, and validator behaviour
//! on hand-corrupted runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_greencell"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn greencell");
    assert!(
        out.status.success(),
        "greencell {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn collect_files(dir: &Path, base: &Path, map: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(&path, base, map);
        } else {
            let rel = path.strip_prefix(base).unwrap().to_path_buf();
            map.insert(rel, fs::read(&path).unwrap());
        }
    }
}

fn assert_dirs_identical(a: &Path, b: &Path) {
    let mut files_a = BTreeMap::new();
    let mut files_b = BTreeMap::new();
    collect_files(a, a, &mut files_a);
    collect_files(b, b, &mut files_b);
    let names_a: Vec<_> = files_a.keys().collect();
    let names_b: Vec<_> = files_b.keys().collect();
    assert_eq!(names_a, names_b, "file sets differ");
    for (name, bytes) in &files_a {
        assert_eq!(bytes, &files_b[name], "{} differs between reruns", name.display());
    }
}

fn small_scenario(dir: &Path) -> PathBuf {
    let scen = dir.join("scen");
    run_ok(&[
        "scenario",
        "gen",
        "--seed",
        "9",
        "--n-4g",
        "4",
        "--n-5g",
        "2",
        "--days",
        "1",
        "--out",
        scen.to_str().unwrap(),
    ]);
    scen
}

#[test]
fn criterion_12_simulate_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = small_scenario(tmp.path());
    let run_a = tmp.path().join("a");
    let run_b = tmp.path().join("b");
    for run in [&run_a, &run_b] {
        run_ok(&[
            "simulate",
            "--scenario",
            scen.to_str().unwrap(),
            "--method",
            "greedy",
            "--seed",
            "9",
            "--out",
            run.to_str().unwrap(),
        ]);
    }
    assert_dirs_identical(&run_a, &run_b);
    println!("ACCEPTANCE 12 end-to-end-determinism: PASS - reruns byte-identical across every artifact");
}

#[test]
fn scenario_gen_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = small_scenario(&tmp.path().join("x"));
    let b = small_scenario(&tmp.path().join("y"));
    assert_dirs_identical(&a, &b);
}

#[test]
fn simulate_emits_the_artifact_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = small_scenario(tmp.path());
    let run = tmp.path().join("run");
    run_ok(&[
        "simulate",
        "--scenario",
        scen.to_str().unwrap(),
        "--method",
        "threshold",
        "--out",
        run.to_str().unwrap(),
    ]);
    for name in [
        "manifest.toml",
        "schedule.csv",
        "redistributed.csv",
        "bs_load.csv",
        "metrics.csv",
        "summary.csv",
        "attribution.csv",
        "solutions_with_bs.csv",
        "solutions_without_bs.csv",
    ] {
        assert!(run.join(name).exists(), "missing {name}");
    }
    let mut all = BTreeMap::new();
    collect_files(&run, &run, &mut all);
    assert!(all.len() >= 6, "only {} artifact files", all.len());
}

#[test]
fn deep_without_checkpoint_is_an_actionable_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = small_scenario(tmp.path());
    let out = bin()
        .args([
            "simulate",
            "--scenario",
            scen.to_str().unwrap(),
            "--method",
            "deep",
            "--out",
            tmp.path().join("run").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("--checkpoint") && stderr.contains("control train"),
        "unhelpful error: {stderr}"
    );
}

#[test]
fn validate_accepts_untampered_and_names_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = small_scenario(tmp.path());
    let run = tmp.path().join("run");
    run_ok(&[
        "simulate",
        "--scenario",
        scen.to_str().unwrap(),
        "--method",
        "greedy",
        "--out",
        run.to_str().unwrap(),
    ]);
    run_ok(&["validate", "--run", run.to_str().unwrap()]);

    // Hand-corrupt the schedule: force every cell asleep at slot 5.
    let sched_path = run.join("schedule.csv");
    let corrupted: Vec<String> = fs::read_to_string(&sched_path)
        .unwrap()
        .lines()
        .map(|line| {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() == 3 && parts[1] == "5" {
                format!("{},{},1", parts[0], parts[1])
            } else {
                line.to_string()
            }
        })
        .collect();
    fs::write(&sched_path, corrupted.join("\n") + "\n").unwrap();
    let out = bin()
        .args(["validate", "--run", run.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success(), "validator accepted a corrupted schedule");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("slot 5") && stderr.contains("grid"),
        "violation not named: {stderr}"
    );
}

#[test]
fn validate_names_a_corrupted_dispatch_balance() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = small_scenario(tmp.path());
    let run = tmp.path().join("run");
    run_ok(&[
        "simulate",
        "--scenario",
        scen.to_str().unwrap(),
        "--method",
        "none",
        "--out",
        run.to_str().unwrap(),
    ]);
    let sol_path = run.join("solutions_with_bs.csv");
    let mut bumped = false;
    let corrupted: Vec<String> = fs::read_to_string(&sol_path)
        .unwrap()
        .lines()
        .map(|line| {
            let parts: Vec<&str> = line.split(',').collect();
            if !bumped && parts.len() == 6 && parts[1] == "11" && parts[2] == "1" {
                bumped = true;
                let power: f64 = parts[3].parse().unwrap();
                format!(
                    "{},{},{},{},{},{}",
                    parts[0],
                    parts[1],
                    parts[2],
                    power + 9.0,
                    parts[4],
                    parts[5]
                )
            } else {
                line.to_string()
            }
        })
        .collect();
    assert!(bumped, "no committed unit at slot 11 to corrupt");
    fs::write(&sol_path, corrupted.join("\n") + "\n").unwrap();
    let out = bin()
        .args(["validate", "--run", run.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("balance") && stderr.contains("slot 11"),
        "violation not named: {stderr}"
    );
}

#[test]
fn compare_run_with_itself_has_zero_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = small_scenario(tmp.path());
    let run = tmp.path().join("run");
    run_ok(&[
        "simulate",
        "--scenario",
        scen.to_str().unwrap(),
        "--method",
        "threshold",
        "--out",
        run.to_str().unwrap(),
    ]);
    let cmp = tmp.path().join("cmp");
    run_ok(&[
        "compare",
        "--runs",
        run.to_str().unwrap(),
        "--runs",
        run.to_str().unwrap(),
        "--out",
        cmp.to_str().unwrap(),
    ]);
    let summary = fs::read_to_string(cmp.join("summary_compare.csv")).unwrap();
    for line in summary.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let delta_m: f64 = fields[5].parse().unwrap();
        let delta_co2: f64 = fields[6].parse().unwrap();
        assert_eq!(delta_m, 0.0);
        assert_eq!(delta_co2, 0.0);
    }
}

#[test]
fn compare_rejects_a_malformed_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = small_scenario(tmp.path());
    let run = tmp.path().join("run");
    run_ok(&[
        "simulate",
        "--scenario",
        scen.to_str().unwrap(),
        "--method",
        "none",
        "--out",
        run.to_str().unwrap(),
    ]);
    let bogus = tmp.path().join("bogus");
    fs::create_dir_all(&bogus).unwrap();
    let out = bin()
        .args([
            "compare",
            "--runs",
            run.to_str().unwrap(),
            "--runs",
            bogus.to_str().unwrap(),
            "--out",
            tmp.path().join("cmp").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn thread_cap_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = small_scenario(tmp.path());
    let regions = tmp.path().join("regions.csv");
    fs::write(
        &regions,
        "name,n_4g,n_5g,n_users,area_km2\neast,30,12,200000,9000\n",
    )
    .unwrap();
    let mut outs = Vec::new();
    for (label, threads) in [("one", "1"), ("many", "4")] {
        let out = tmp.path().join(label);
        let status = bin()
            .env("GREENCELL_THREADS", threads)
            .args([
                "regions",
                "estimate",
                "--scenario",
                scen.to_str().unwrap(),
                "--regions",
                regions.to_str().unwrap(),
                "--trials",
                "300",
                "--seed",
                "3",
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        outs.push(out);
    }
    assert_dirs_identical(&outs[0], &outs[1]);
}

#[test]
fn train_then_deep_simulate_round_trips_through_the_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = small_scenario(tmp.path());
    let train_dir = tmp.path().join("train");
    run_ok(&[
        "control",
        "train",
        "--scenario",
        scen.to_str().unwrap(),
        "--episodes",
        "3",
        "--seed",
        "5",
        "--out",
        train_dir.to_str().unwrap(),
    ]);
    assert!(train_dir.join("checkpoint.bin").exists());
    assert!(train_dir.join("training_log.csv").exists());
    let run = tmp.path().join("run");
    run_ok(&[
        "simulate",
        "--scenario",
        scen.to_str().unwrap(),
        "--method",
        "deep",
        "--checkpoint",
        train_dir.join("checkpoint.bin").to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    run_ok(&["validate", "--run", run.to_str().unwrap()]);
}
