//! End-to-end runs of the binary on the bundled scenarios.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heleshaw"))
        .args(args)
        .env("HELESHAW_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let k = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[k].parse().unwrap()).collect()
}

#[test]
fn simulate_zero_scenario() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["simulate", scenario("zero.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = root.path().join("zero");
    for f in ["summary.json", "timings.json", "mass_ledger.csv", "trajectory_long.csv", "config.toml"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let snaps: Vec<_> = std::fs::read_dir(dir.join("snapshots")).unwrap().collect();
    assert_eq!(snaps.len(), 11);
    for s in snaps {
        let p = s.unwrap().path();
        assert!(column(&p, "u").iter().chain(&column(&p, "p")).all(|v| *v == 0.0));
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["status"], "completed");
}

#[test]
fn crowd_exit_mass_decays() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["simulate", scenario("crowd_exit.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mass = column(&root.path().join("crowd_exit/mass_ledger.csv"), "mass");
    assert_eq!(mass.len(), 101);
    assert!(mass.windows(2).all(|w| w[1] < w[0]));
    assert!(mass[100] < 0.5 * mass[0]);
}

#[test]
fn congested_inflow_pressure_is_localized() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["simulate", scenario("congested_inflow.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let snap = root.path().join("congested_inflow/snapshots/step_00050.csv");
    let (x, u, p) = (column(&snap, "x"), column(&snap, "u"), column(&snap, "p"));
    assert!(p.iter().copied().fold(0.0, f64::max) > 1e-3);
    for c in 0..x.len() {
        if p[c] > 1e-6 {
            assert!(u[c] > 1.0 - 1e-6, "pressure outside the saturated zone at x = {}", x[c]);
        }
    }
    assert!(p[0].abs() < 1e-6 && p[x.len() - 1].abs() < 1e-6);
}

#[test]
fn stationary_congested_matches_poisson() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["stationary", scenario("stationary_congested.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let f = root.path().join("stationary_congested/stationary.csv");
    let err = column(&f, "x")
        .iter()
        .zip(column(&f, "p"))
        .map(|(x, p)| (p - 0.1 * x * (1.0 - x)).abs())
        .fold(0.0, f64::max);
    assert!(err <= 5e-4, "{err}");
}

#[test]
fn verify_all_on_bundled_pack_passes() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["verify", scenario("pack.toml").to_str().unwrap(), "--suite", "all"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("FAIL (expected)"));
    assert!(!out.lines().any(|l| l.ends_with(" FAIL")));
    let reports = std::fs::read_dir(root.path().join("pack/reports")).unwrap().count();
    // 20 contraction, 20 comparison, one phase, stability, 41 entropy, 7 controls
    assert_eq!(reports, 90);
}

#[test]
fn negative_controls_fail_with_exit_zero() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["verify", scenario("zero.toml").to_str().unwrap(), "--suite", "negative_controls"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("FAIL (expected)").count(), 7);
}

#[test]
fn failing_property_exits_one() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("strict.toml");
    let text = std::fs::read_to_string(scenario("crowd_1d.toml")).unwrap() + "\n[verify]\nc_e = 0.0\npack_size = 2\n";
    std::fs::write(&cfg, text).unwrap();
    let o = run(root.path(), &["verify", cfg.to_str().unwrap(), "--suite", "entropy"]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).lines().any(|l| l.ends_with(" FAIL")));
}

#[test]
fn mismatched_grids_are_an_invalid_comparison() {
    let root = tempfile::tempdir().unwrap();
    std::fs::write(root.path().join("other.toml"), "[grid]\nnx = 30\n[time]\nT = 0.5\ntau = 0.05\n").unwrap();
    let cfg = root.path().join("main.toml");
    std::fs::write(&cfg, "[grid]\nnx = 50\n[time]\nT = 0.5\ntau = 0.05\n[verify]\ncompare_with = \"other.toml\"\n").unwrap();
    let o = run(root.path(), &["verify", cfg.to_str().unwrap(), "--suite", "contraction"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invalid comparison"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_two() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("bad.toml");
    std::fs::write(&cfg, "[grid]\nnx = 10\n[time]\nT = 1.0\ntau = 0.3\n").unwrap();
    let o = run(root.path(), &["simulate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("T not an integer multiple of tau"));

    let o = run(root.path(), &["verify", scenario("zero.toml").to_str().unwrap(), "--suite", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown suite"));

    std::fs::write(&cfg, "[grid]\nnx = 20000\n[time]\nT = 0.1\ntau = 0.1\n").unwrap();
    let o = run(root.path(), &["convergence", cfg.to_str().unwrap(), "--levels", "6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("resource guard"));
}

#[test]
fn failed_run_keeps_partial_outputs() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("stiff.toml");
    // a fixed point capped at two iterations cannot meet 1e-12
    std::fs::write(
        &cfg,
        "[grid]\nnx = 10\n[reaction]\nkind = \"linear_decay\"\na = 1.0\nb = 1.0\n[time]\nT = 0.5\ntau = 0.1\nreaction_max_iter = 2\n",
    )
    .unwrap();
    let o = run(root.path(), &["simulate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("step 0"), "{}", stderr(&o));
    let dir = root.path().join("stiff");
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "failed");
    assert!(dir.join("snapshots/step_00000.csv").is_file());
}

#[test]
fn convergence_on_transport_scenario() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["convergence", scenario("congestion_free.toml").to_str().unwrap(), "--levels", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let f = root.path().join("congestion_free/convergence.csv");
    let text = std::fs::read_to_string(&f).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let k = rdr.headers().unwrap().iter().position(|h| h == "successive_order").unwrap();
    let orders: Vec<f64> = rdr.records().filter_map(|r| r.unwrap()[k].parse().ok()).collect();
    assert_eq!(orders.len(), 2);
    assert!(orders.iter().all(|o| *o >= 0.8), "{orders:?}");
}

#[test]
fn output_root_flag_overrides_environment() {
    let root = tempfile::tempdir().unwrap();
    let other = tempfile::tempdir().unwrap();
    let o = run(
        root.path(),
        &["--output-root", other.path().to_str().unwrap(), "--name", "z", "simulate", scenario("zero.toml").to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(other.path().join("z/summary.json").is_file());
    assert!(!root.path().join("zero").exists());
}
