use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn write_model(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ising-lsi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

struct Fixture {
    dir: TempDir,
    path4: PathBuf,
    cycle3: PathBuf,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let path4 = write_model(dir.path(), "path4.json", r#"{"kind": "path", "params": {"length": 4}}"#);
    let cycle3 = write_model(
        dir.path(),
        "cycle3.json",
        r#"{"kind": "cycle", "params": {"length": 3}, "J": 1.0, "h": 0.0}"#,
    );
    Fixture { dir, path4, cycle3 }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bound_at_zero_temperature_parameter_is_one_half() {
    let f = fixture();
    let out = run(&["bound", "--model", s(&f.path4), "--beta", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    assert_eq!(report["bound_upper"].as_f64(), Some(0.5));
    assert_eq!(report["bound_lower"].as_f64(), Some(0.5));
    assert_eq!(report["coarse_bound"].as_f64(), Some(0.5));
}

#[test]
fn theorem_battery_on_cycle_passes() {
    let f = fixture();
    let out = run(&["verify", "theorem", "--model", s(&f.cycle3), "--beta", "0.2", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["violations"].as_u64(), Some(0));
    assert!(!report["entries"].as_array().unwrap().is_empty());
}

#[test]
fn corollary_closed_form() {
    let out = run(&["corollary", "--D", "1", "--beta-c", "1", "--beta", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let value = stdout_json(&out)["value"].as_f64().unwrap();
    assert!((value - 1.5).abs() < 1e-12, "{value}");
}

#[test]
fn invalid_inputs_exit_with_one() {
    let f = fixture();
    let bad = write_model(f.dir.path(), "bad.json", r#"{"kind": "hexagon"}"#);
    assert_eq!(run(&["bound", "--model", s(&bad), "--beta", "0.1"]).status.code(), Some(1));
    assert_eq!(run(&["bound", "--model", s(&f.path4), "--beta", "-1"]).status.code(), Some(1));
    assert_eq!(run(&["bound", "--beta", "0.1"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["bound", "--model", "/nonexistent/model.json", "--beta", "0.1"]).status.code(), Some(1));
    // alpha must exceed beta
    assert_eq!(
        run(&["bound", "--model", s(&f.path4), "--beta", "0.5", "--alpha", "0.4"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let f = fixture();
    let a = f.dir.path().join("a");
    let b = f.dir.path().join("b");
    for dir in [&a, &b] {
        let common = ["--model", s(&f.cycle3), "--beta", "0.3", "--seed", "11", "--out", s(dir)];
        for cmd in [&["bound"][..], &["lsi", "--restarts", "2"][..], &["verify", "fkg", "--samples", "50"][..]] {
            let mut args: Vec<&str> = cmd.to_vec();
            args.extend_from_slice(&common);
            assert_eq!(run(&args).status.code(), Some(0));
        }
    }
    for name in ["bound.json", "lsi.json", "verify-fkg.json", "traces/chi.csv", "traces/lsi_trajectory.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    // timestamps live in a separate file
    assert!(a.join("meta/bound.json").exists());
    assert!(!String::from_utf8(fs::read(a.join("bound.json")).unwrap())
        .unwrap()
        .contains("unix_time"));
}

#[test]
fn report_bundles_prior_outputs() {
    let f = fixture();
    let out_dir = f.dir.path().join("run");
    let o = s(&out_dir);
    let m = s(&f.cycle3);
    assert_eq!(run(&["bound", "--model", m, "--beta", "0.2", "--out", o]).status.code(), Some(0));
    assert_eq!(run(&["gap", "--model", m, "--beta", "0.2", "--out", o]).status.code(), Some(0));
    assert_eq!(run(&["exact", "--model", m, "--beta", "0.2", "--out", o]).status.code(), Some(0));
    let out = run(&["report", "--out", o]);
    assert_eq!(out.status.code(), Some(0));
    let bundle: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    for key in ["bound", "gap", "exact"] {
        assert!(bundle.get(key).is_some(), "missing {key}: {bundle}");
    }
    assert!(bundle.get("report").is_none());
}

#[test]
fn gap_and_exact_agree_on_single_site() {
    let dir = TempDir::new().unwrap();
    let model = write_model(dir.path(), "one.json", r#"{"kind": "path", "params": {"length": 1}, "h": 0.7}"#);
    let gap = stdout_json(&run(&["gap", "--model", s(&model), "--beta", "0.4"]));
    // two-state chain: the gap is the sum of the flip rates
    let expected = 1.0 + (2.0f64 * 0.7).cosh();
    assert!((gap["gap"].as_f64().unwrap() - expected).abs() < 1e-12);
    let exact = stdout_json(&run(&["exact", "--model", s(&model), "--beta", "0.4"]));
    let m = exact["magnetizations"][0].as_f64().unwrap();
    assert!((m - 0.7f64.tanh()).abs() < 1e-12);
}

#[test]
fn verification_subcommands_pass_on_small_models() {
    let f = fixture();
    let m = s(&f.path4);
    for args in [
        &["verify", "fkg", "--samples", "100"][..],
        &["verify", "monotone", "--samples", "100"][..],
        &["verify", "pf", "--samples", "100"][..],
        &["verify", "decomposition"][..],
        &["verify", "entropy-decomp"][..],
        &["verify", "criterion", "--samples", "100"][..],
    ] {
        let mut full = args.to_vec();
        full.extend_from_slice(&["--model", m, "--beta", "0.4"]);
        let out = run(&full);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn decay_trace_is_written() {
    let f = fixture();
    let out_dir = f.dir.path().join("decay");
    let out = run(&[
        "decay", "--model", s(&f.cycle3), "--beta", "0.3", "--points", "11", "--out", s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("traces/decay.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,entropy,envelope"));
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn mcmc_susceptibility_matches_enumeration() {
    let f = fixture();
    let out = run(&[
        "mcmc", "susceptibility", "--model", s(&f.path4), "--beta", "0.3", "--sweeps", "4000", "--burn-in", "500",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    let chi = report["estimate"]["chi"].as_f64().unwrap();
    let se = report["estimate"]["se"].as_f64().unwrap();
    let exact = report["exact"].as_f64().unwrap();
    assert!((chi - exact).abs() < 5.0 * se + 1e-9, "{chi} +- {se} vs {exact}");
}

#[test]
fn scaling_table_has_one_row_per_size_and_beta() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("scaling");
    let out = run(&[
        "mcmc", "scaling", "--family", "torus", "--sizes", "3,4", "--betas", "0.1,0.3", "--sweeps", "600",
        "--burn-in", "100", "--batches", "10", "--out", s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("traces/scaling.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("L,beta,chi_hat,chi_se,bound_value,corollary_value"));
    assert_eq!(csv.lines().count(), 5);
}
