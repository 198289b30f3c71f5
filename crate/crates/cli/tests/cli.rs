use std::path::Path;
use std::process::{Command, Output};

const HELIUM_ION: &str = "N = 1\n[[nuclei]]\npos = [0, 0, 0]\nZ = 2\n";

fn gk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gausskern")).args(args).env_remove("GAUSSKERN_THREADS").output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(gk(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gk(&["constants"]).status.code(), Some(2));
    assert_eq!(gk(&["constants", "--config", "/nonexistent/x.toml"]).status.code(), Some(2));
    let d = tempfile::tempdir().unwrap();
    let bad = write(d.path(), "bad.toml", &format!("{HELIUM_ION}[operator]\ngamma = 1.5\n"));
    let o = gk(&["constants", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma must lie in (0,1)"), "{}", stderr(&o));
    let shift = write(d.path(), "shift.toml", &format!("{HELIUM_ION}[eigen]\nmu = 2.0\n"));
    let o = gk(&["eigen", "--config", &shift, "--out", d.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("theta^2/4"));
    assert_eq!(gk(&["validate", "--suite", "nope"]).status.code(), Some(2));
}

#[test]
fn non_contractive_solve_exits_with_one() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "nc.toml", "N = 1\n[[nuclei]]\npos = [0, 0, 0]\nZ = 1\n[operator]\ngamma = 0.5\n");
    let o = gk(&["solve", "--config", &c, "--out", d.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("operator bound"), "{}", stderr(&o));
}

#[test]
fn expsum_table_reaches_the_precision_floor() {
    let o = gk(&["expsum-table", "--beta", "1", "--h", "0.25", "--rmin", "1e-3", "--rmax", "1e3", "--grid", "1000"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains("error_bound="));
    assert_eq!(lines.next().unwrap(), "r,exact,approx,rel_error");
    let worst = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap().abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-13, "{worst}");
    assert_eq!(text.lines().count(), 1002);
}

#[test]
fn constants_report_fields() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "he.toml", HELIUM_ION);
    let o = gk(&["constants", "--config", &c]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["theta"], 4.0);
    assert_eq!(v["m"], 4);
    assert_eq!(v["admissible"], true);
    assert_eq!(v["gamma_selected"], true);
    assert!(v["operator_bound"].as_f64().unwrap() < 1.0);
}

#[test]
fn validate_is_deterministic() {
    let a = gk(&["validate", "--suite", "algebra", "--seed", "7", "--size", "smoke"]);
    let b = gk(&["--threads", "2", "validate", "--suite", "algebra", "--seed", "7", "--size", "smoke"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["seed"], 7);
}

#[test]
fn solve_writes_identical_outputs() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "h.toml", "N = 1\n[[nuclei]]\npos = [0, 0, 0]\nZ = 1\n[solver]\nepsilon = 1e-2\n");
    let runs: Vec<(Vec<u8>, Vec<u8>)> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = d.path().join(name);
            let o = gk(&["solve", "--config", &c, "--out", out.to_str().unwrap()]);
            assert!(o.status.success(), "{}", stderr(&o));
            (std::fs::read(out.join("report.json")).unwrap(), std::fs::read(out.join("solution.jsonl")).unwrap())
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let v: serde_json::Value = serde_json::from_slice(&runs[0].0).unwrap();
    assert!(v["term_count"].as_f64().unwrap() <= v["count_bound"].as_f64().unwrap());
    assert!(v["certificate"]["delta_op_bound"].as_f64().unwrap() > 0.0);
    assert!(v["residual_norm"].as_f64().unwrap() <= 1e-2 * 1.1);
}

#[test]
fn eigen_writes_history_and_csv() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "he.toml", &format!("{HELIUM_ION}[eigen]\ninitial_precision = 0.5\n"));
    let out = d.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_gausskern"))
        .args(["eigen", "--config", &c, "--max-iter", "2", "--variant", "residual", "--out", out.to_str().unwrap()])
        .env("GAUSSKERN_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "iter,rayleigh,residual_norm,terms");
    assert_eq!(rows.len(), 4);
    let h: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("history.json")).unwrap()).unwrap();
    let records = h["history"]["records"].as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert!(records[1]["rayleigh"].as_f64().unwrap() < records[0]["rayleigh"].as_f64().unwrap());
    assert!(out.join("eigenfunction.jsonl").exists());
}
