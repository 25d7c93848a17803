use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_irs-antijam"));
    c.env_remove("IRS_ANTIJAM_TOL").env("RUST_LOG", "warn");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SMALL_IRS: &str = r#"{
  "slots": 6,
  "v_max": 180.0,
  "lx": 2,
  "lz": 2,
  "jammer_radius": 10.0,
  "mc_draws": 200,
  "j_max": 4,
  "seed": 11
}"#;

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.json");
    fs::write(&p, SMALL_IRS).unwrap();
    p
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timings.csv" {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn solve_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(bin().arg("solve").arg(&cfg).arg("--out").arg(&a));
    run(bin().arg("solve").arg(&cfg).arg("--out").arg(&b).args(["--jobs", "2"]));
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 4);
    assert_eq!(fa, fb);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert!(summary["objective"].as_f64().unwrap() > 0.0);
    let traj = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("slot,x,y,z"));
    assert_eq!(traj.lines().count(), 1 + 7);
}

#[test]
fn seed_flag_changes_randomized_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(bin().arg("solve").arg(&cfg).arg("--out").arg(&a));
    run(bin().arg("solve").arg(&cfg).arg("--out").arg(&b).args(["--seed", "12"]));
    assert_ne!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn sweep_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    small_config(tmp.path());
    let spec = tmp.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"base_config": "small.json", "sweep": "p_jam_dbm", "values": [15.0, 30.0],
            "schemes": ["no_irs", "proposed_irs_g"], "output_dir": "unused"}"#,
    )
    .unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(bin().arg("sweep").arg(&spec).arg("--out").arg(&a));
    run(bin().arg("sweep").arg(&spec).arg("--out").arg(&b).args(["--jobs", "3"]));
    assert_eq!(files(&a), files(&b));

    let results = fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 4);
    assert!(results.lines().skip(1).all(|l| l.ends_with(",ok")));
    assert!(!results.lines().next().unwrap().contains("wall"));
    assert_eq!(fs::read_dir(a.join("cells")).unwrap().count(), 8);

    let out = run(bin().arg("export").arg(&a));
    let listed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(listed.lines().count(), 2);
    let plot = fs::read_to_string(a.join("plot_worst_case_dm-10.csv")).unwrap();
    let lines: Vec<&str> = plot.lines().collect();
    assert_eq!(lines[0], "p_jam_dbm,no_irs,proposed_irs_g");
    assert_eq!(lines.len(), 3);
}

#[test]
fn verify_trajectory_against_grid() {
    let out = run(bin().arg("verify").arg(configs().join("two_slot.json")).args(["--oracle", "trajectory"]));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["relative_gap"].as_f64().unwrap() <= 0.02);
}

#[test]
fn verify_phase_chain() {
    let out = run(bin().arg("verify").arg(configs().join("phase_small.json")).args(["--oracle", "phase", "--levels", "8"]));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = v.as_array().unwrap();
    assert_eq!(checks.len(), 10);
    assert!(checks.iter().all(|c| c["passed"] == true));
}

#[test]
fn tolerance_from_flag_and_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let bad = bin().arg("solve").arg(&cfg).arg("--out").arg(tmp.path().join("x")).env("IRS_ANTIJAM_TOL", "-1").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("tolerance"));
    run(bin()
        .arg("solve")
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("y"))
        .args(["--tol", "1e-7"])
        .env("IRS_ANTIJAM_TOL", "-1"));
}

#[test]
fn invalid_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.json");
    fs::write(&p, r#"{"slots": 0}"#).unwrap();
    let out = bin().arg("solve").arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["sweep", "no_such_preset"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().arg("verify").arg(configs().join("desk.json")).args(["--oracle", "trajectory"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
