use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn default_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/default.json")
}

fn mpslam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpslam"))
        .args(args)
        .output()
        .expect("binary runs")
}

const SMALL: [&str; 4] = [
    "--set",
    "filter.n_particles=300",
    "--set",
    "trajectory.waypoints=[[0,0],[1,0]]",
];

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let scenario = default_scenario();
    let mut args = vec![
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
    ];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    mpslam(&args)
}

#[test]
fn missing_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpslam(&[
        "run",
        "--scenario",
        "/nonexistent/s.json",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_key_exits_3_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    std::fs::write(&s, r#"{"filter": {"n_particle": 10}}"#).unwrap();
    let out = mpslam(&[
        "run",
        "--scenario",
        s.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("filter"), "{err}");
}

#[test]
fn invalid_values_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--set", "filter.p_de=2"]);
    assert_eq!(out.status.code(), Some(3));
    let out = small_run(dir.path(), &["--set", "filter.n_particles=lots"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_writes_outputs_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = small_run(a.path(), &["--runs", "2"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "scenario.json",
        "rmse.csv",
        "mode_trace.csv",
        "trace_run0.csv",
        "trace_run1.csv",
        "map_run0.csv",
        "map_modes_run0.csv",
        "measurements_run1.csv",
    ] {
        assert!(a.path().join(f).exists(), "{f} missing");
    }
    let trace = std::fs::read_to_string(a.path().join("trace_run0.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,run,est_x,est_y,est_vx,est_vy,est_orient_rad,true_x,true_y,true_orient_rad"
    );
    assert_eq!(lines.count(), 10);
    let map = std::fs::read_to_string(a.path().join("map_run0.csv")).unwrap();
    assert!(map.starts_with("step,run,feat_id,x,y,p_exist,p_va,p_ps"));

    let out = small_run(b.path(), &["--runs", "2"]);
    assert!(out.status.success());
    for f in [
        "trace_run0.csv",
        "trace_run1.csv",
        "map_run1.csv",
        "rmse.csv",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        std::fs::read(a.path().join("trace_run0.csv")).unwrap(),
        std::fs::read(a.path().join("trace_run1.csv")).unwrap()
    );

    let rep = mpslam(&["report", "--in", a.path().to_str().unwrap()]);
    assert!(rep.status.success());
    let text = String::from_utf8_lossy(&rep.stdout);
    assert!(text.contains("runs 2  steps 10"), "{text}");
}

#[test]
fn replayed_measurements_reproduce_the_simulated_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(small_run(a.path(), &[]).status.success());
    let meas = a.path().join("measurements_run0.csv");
    let out = small_run(b.path(), &["--measurements", meas.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        std::fs::read(a.path().join("trace_run0.csv")).unwrap(),
        std::fs::read(b.path().join("trace_run0.csv")).unwrap()
    );
}

#[test]
fn missing_measurement_file_exits_2_and_report_needs_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--measurements", "/nonexistent/m.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let rep = mpslam(&["report", "--in", dir.path().to_str().unwrap()]);
    assert_eq!(rep.status.code(), Some(2));
}
