use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_coarray-doa");

const SMALL: &str = r#"
geometry = "mra"
n = 7
layout = "type2"
l = 2
mu = 8
thetas = [-0.75, -0.6, -0.45, -0.3, -0.15, 0.0, 0.15, 0.3, 0.45, 0.6, 0.75]
snapshots = 300
trials = 3
grid_size = 1001
sweep_values = [-10.0, 0.0, 10.0]
base_seed = 42
"#;

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

/// CSV with the runtime column blanked out.
fn without_runtime(csv: &str) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = csv.lines().map(|l| l.split(',').map(String::from).collect()).collect();
    let col = rows[0].iter().position(|c| c == "mean_runtime_s").unwrap();
    for r in &mut rows {
        r[col].clear();
    }
    rows
}

#[test]
fn sweep_is_deterministic_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = cfg.to_str().unwrap();
    assert!(run(&["sweep", "--config", c, "--out", a.to_str().unwrap(), "--workers", "1"]).status.success());
    assert!(run(&["sweep", "--config", c, "--out", b.to_str().unwrap(), "--workers", "4"]).status.success());
    let a = std::fs::read_to_string(a).unwrap();
    let b = std::fs::read_to_string(b).unwrap();
    assert!(!a.contains('\r'));
    assert_eq!(a.lines().next().unwrap(), "estimator,axis,value,rmse,failures,trials,mean_runtime_s");
    assert_eq!(a.lines().count(), 1 + 3 * 3);
    assert_eq!(without_runtime(&a), without_runtime(&b));
}

#[test]
fn seed_and_trial_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let c = cfg.to_str().unwrap();
    let one = run(&["sweep", "--config", c, "--trials", "2", "--seed", "1"]);
    let two = run(&["sweep", "--config", c, "--trials", "2", "--seed", "2"]);
    let one = String::from_utf8(one.stdout).unwrap();
    let two = String::from_utf8(two.stdout).unwrap();
    assert!(one.lines().skip(1).all(|l| l.split(',').nth(5) == Some("2")));
    assert_ne!(without_runtime(&one), without_runtime(&two));
}

#[test]
fn sweep_with_crlb_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{SMALL}include_crlb = true\n"));
    let out = run(&["sweep", "--config", cfg.to_str().unwrap(), "--trials", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("estimator,axis,value,rmse,failures,trials,mean_runtime_s,crlb_pc_up,crlb_fc_up\n"));
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let pc: f64 = f[7].parse().unwrap();
        let fc: f64 = f[8].parse().unwrap();
        assert!(fc > 0.0 && fc <= pc);
    }
}

#[test]
fn crlb_subcommand_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let out = run(&["crlb", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("snr_db,source_index,crlb_value,bound_name"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 11 * 2);
    assert!(rows.iter().all(|r| r[3] == "pc-up-prop" || r[3] == "fc-up"));
}

#[test]
fn geometry_estimate_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let c = cfg.to_str().unwrap();
    let g = run(&["geometry", "--config", c]);
    assert!(g.status.success());
    let text = String::from_utf8(g.stdout).unwrap();
    assert!(text.contains("dof   85"));
    assert!(text.contains("dof bound 85"));

    let weights = dir.path().join("w.csv");
    assert!(run(&["geometry", "--config", c, "--out", weights.to_str().unwrap()]).status.success());
    let w = std::fs::read_to_string(weights).unwrap();
    assert!(w.starts_with("array,lag,weight\n"));
    assert!(w.contains("full,0,14\n") && w.contains("sub2,0,7\n"));

    let e = run(&["estimate", "--config", c]);
    assert!(e.status.success());
    let est = String::from_utf8(e.stdout).unwrap();
    assert_eq!(est.lines().count(), 1 + 3 * 11);

    let s = run(&["simulate", "--config", c]);
    assert!(s.status.success());
    assert_eq!(String::from_utf8(s.stdout).unwrap().lines().count(), 1 + 14 * 300);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &format!("{SMALL}snr = 1.0\n"));
    assert_eq!(run(&["sweep", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(run(&["sweep"]).status.code(), Some(2));
    // Eleven sources cannot be resolved by three-sensor subarrays.
    let small = SMALL.replace("n = 7", "n = 3").replace("mu = 8", "mu = 2");
    let numerical = write(dir.path(), "num.toml", &small);
    assert_eq!(run(&["sweep", "--config", numerical.to_str().unwrap()]).status.code(), Some(3));
}
