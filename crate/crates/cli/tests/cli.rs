use std::fs;
use std::process::{Command, Output};

use anisolve::{Field3D, Layout};
use serde_json::Value;

fn anisolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anisolve")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).unwrap()
}

#[test]
fn single_column_solves_in_one_iteration() {
    let out = anisolve(&["solve", "--geometry", "planar", "--m", "1", "--nz", "16", "--workers", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["iterations"], 1);
    assert_eq!(v["converged"], true);
    assert!(v["true_residual"].as_f64().unwrap() <= 1e-12 * v["initial_residual"].as_f64().unwrap());
}

#[test]
fn solve_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let out = anisolve(&[
        "solve",
        "--m",
        "4",
        "--nz",
        "8",
        "--workers",
        "2",
        "--variant",
        "interleaved",
        "--out-json",
        &path("res.json"),
        "--out-csv",
        &path("hist.csv"),
        "--dump-matrix",
        &path("a.mtx"),
        "--dump-solution",
        &path("u.raw"),
        "--dump-geometry",
        &path("geo.csv"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(path("res.json")).unwrap()).unwrap();
    assert_eq!(v, json(&out));
    assert_eq!(v["variant"], "interleaved");
    assert_eq!(v["unknowns"], 128);

    let hist = fs::read_to_string(path("hist.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("iteration,abs_residual,rel_residual"));
    assert_eq!(lines.count(), v["iterations"].as_u64().unwrap() as usize + 1);
    assert!(!hist.contains('\r'));

    let mtx = fs::read_to_string(path("a.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real general"));

    let u = Field3D::<f64>::read_raw(std::io::BufReader::new(fs::File::open(path("u.raw")).unwrap())).unwrap();
    assert_eq!((u.m(), u.n_z(), u.layout()), (4, 8, Layout::VerticalContiguous));
    assert!(fs::read_to_string(path("geo.csv")).unwrap().lines().count() > 16);
}

#[test]
fn solution_dump_round_trips_as_initial_guess() {
    let dir = tempfile::tempdir().unwrap();
    let u = dir.path().join("u.raw");
    let u = u.to_str().unwrap();
    let first = anisolve(&["solve", "--m", "4", "--nz", "8", "--epsilon", "1e-8", "--dump-solution", u]);
    assert_eq!(first.status.code(), Some(0));
    let second = anisolve(&["solve", "--m", "4", "--nz", "8", "--epsilon", "1e-8", "--initial-guess", u]);
    assert_eq!(second.status.code(), Some(0));
    // The restarted run starts from the residual the first one ended with.
    let (v1, v2) = (json(&first), json(&second));
    let start = v2["initial_residual"].as_f64().unwrap();
    assert!(start <= 1e-8 * v1["initial_residual"].as_f64().unwrap());
    assert!((start - v1["true_residual"].as_f64().unwrap()).abs() <= 1e-6 * start);
}

#[test]
fn wrong_sized_initial_guess_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let u = dir.path().join("u.raw");
    let u = u.to_str().unwrap();
    assert_eq!(anisolve(&["solve", "--m", "2", "--nz", "4", "--dump-solution", u]).status.code(), Some(0));
    let out = anisolve(&["solve", "--backend", "csr", "--m", "4", "--nz", "8", "--initial-guess", u]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn maxiter_without_convergence_exits_2() {
    let out = anisolve(&["solve", "--m", "8", "--nz", "8", "--maxiter", "2", "--epsilon", "1e-12"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["converged"], false);
    assert_eq!(v["iterations"], 2);
}

#[test]
fn invalid_arguments() {
    assert_eq!(anisolve(&["solve", "--m", "many"]).status.code(), Some(64));
    assert_eq!(anisolve(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(anisolve(&["solve", "--layout", "diagonal"]).status.code(), Some(64));
    assert_eq!(anisolve(&["--help"]).status.code(), Some(0));
    // Parsed but rejected by validation.
    assert_eq!(anisolve(&["solve", "--m", "0"]).status.code(), Some(1));
    assert_eq!(anisolve(&["solve", "--m", "2", "--nz", "2", "--omega2=-1"]).status.code(), Some(1));
    assert_eq!(
        anisolve(&["solve", "--m", "2", "--nz", "2", "--backend", "csr", "--variant", "interleaved"]).status.code(),
        Some(1)
    );
}

#[test]
fn verify_default_suite_passes() {
    let out = anisolve(&["verify", "--workers", "2"]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    for name in ["operator_equivalence", "symmetry", "positive_definite", "preconditioner_exactness", "worker_determinism"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn verify_reports_injected_fault() {
    let out = anisolve(&["verify", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(3));
    let text = stdout(&out);
    let failed = text.lines().find(|l| l.starts_with("failed:")).unwrap();
    assert!(failed.contains("symmetry"), "{text}");
}

#[test]
fn verify_single_grid_runs_spectrum_check() {
    let out = anisolve(&["verify", "--grid", "4x4x8"]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.lines().any(|l| l.starts_with("spectrum") && l.contains("ok")), "{text}");
    assert_eq!(anisolve(&["verify", "--grid", "64x64x64"]).status.code(), Some(1));
    assert_eq!(anisolve(&["verify", "--grid", "4x8"]).status.code(), Some(1));
}

#[test]
fn bench_single_configuration_emits_one_row() {
    let out = anisolve(&["bench", "--m", "8", "--nz", "8", "--iterations", "5", "--repetitions", "1", "--workers", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("backend,variant,layout,precision,workers"));
    let cols: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cols.len(), lines[0].split(',').count());
    assert_eq!(&cols[..5], &["matrix_free", "standard", "vertical", "double", "1"]);
    assert_eq!(cols[7], "5");
}

#[test]
fn bench_sweep_skips_csr_interleaved() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let out = anisolve(&[
        "bench",
        "--m",
        "4",
        "--nz",
        "4",
        "--iterations",
        "2",
        "--repetitions",
        "1",
        "--backend",
        "matrix-free,csr",
        "--variant",
        "standard,interleaved",
        "--precision",
        "single,double",
        "--out-csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 2);
    assert!(!text.contains("csr,interleaved"));
}

#[test]
fn cost_model_prints_both_tables() {
    let out = anisolve(&["cost-model"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l == "pcg_total,none,46,40"));
    assert!(text.lines().any(|l| l == "interleaved_prec,columns_cached,19,9"));
    assert!(text.lines().any(|l| l == "axpy,n/a,2,3"));
    assert_eq!(text.lines().count(), 1 + 5 + 7 * 3);
}
