use std::path::Path;
use std::process::{Command, Output};

fn swe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swe-esdg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn no_arguments_prints_usage() {
    let o = swe(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(swe(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(swe(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn verify_operators_degree_3() {
    let o = swe(&["verify-operators", "--degree", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("Pq*Vq = I"));
    assert!(out.contains("Q_SBP_r + Q_SBP_r^T"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn verify_operators_out_of_range() {
    let o = swe(&["verify-operators", "--degree", "12"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error [quadrature]:"));
}

#[test]
fn verify_quadrature_passes() {
    let o = swe(&["verify-quadrature"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("pass").count(), 18);
}

#[test]
fn missing_lobatto_rules_are_skipped() {
    let o = Command::new(env!("CARGO_BIN_EXE_swe-esdg"))
        .args(["verify-quadrature", "--family", "lobatto"])
        .env("SWE_ESDG_SBP_DIR", "/nonexistent")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("skipped").count(), 4);
}

fn write_lake_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("lake.cfg");
    std::fs::write(
        &p,
        "[run]\nproblem = lake\ndegree = 2\ntfinal = 0.05\n[mesh]\nnx = 4\nny = 4\nwarp = 0.1\n[output]\nevery = 2\n",
    )
    .unwrap();
    p
}

#[test]
fn run_config_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_lake_config(dir.path());
    let mut csv = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = swe(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let text = stdout(&o);
        assert!(text.contains("# warp = 0.1"));
        assert!(text.contains("# initial max |du/dt|"));
        assert!(text.contains("t,mass,entropy,min_h"));
        assert!(out.join("errors.csv").exists());
        assert!(out.join("solution_0.0500.vtk").exists());
        csv.push(std::fs::read(out.join("invariants.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
}

#[test]
fn bad_config_names_the_module() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cfg");
    std::fs::write(&p, "[run]\ncfl = -1\n").unwrap();
    let o = swe(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.starts_with("error [config]:") && err.lines().count() == 1,
        "{err}"
    );
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ratios.csv");
    let o = swe(&[
        "bench",
        "--sizes",
        "4,6",
        "--elements",
        "2",
        "--threads",
        "1",
        "--seed",
        "3",
        "--out",
        p.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&p).unwrap();
    assert!(csv.starts_with("n,K,reps,t_esdg,t_dg,ratio"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn convergence_rejects_problems_without_exact_solution() {
    let o = swe(&["convergence", "--problem", "lake"]);
    assert_eq!(o.status.code(), Some(2));
}
