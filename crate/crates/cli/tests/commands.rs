use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exitduel"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Data rows of a CSV, after the hash comment and the header.
fn rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config-hash: "));
    let header = lines.next().unwrap().to_string();
    let body = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, body)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn thresholds_table() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["thresholds"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, body) = rows(&dir.path().join("thresholds.csv"));
    assert_eq!(header, "theta,alpha,c");
    assert_eq!(body.len(), 201);
    let alphas: Vec<f64> = body.iter().map(|r| num(&r[1])).collect();
    assert!(alphas.windows(2).all(|w| w[1] > w[0]));
    for r in &body {
        let theta = num(&r[0]);
        assert!((num(&r[2]) - theta * theta).abs() < 1e-9, "c({theta})");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["exit_code"], 0);
    assert_eq!(report["outputs"][0], "thresholds.csv");
}

#[test]
fn simulate_is_reproducible_and_belief_moves_only_in_region() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = [
        "simulate",
        "--seed",
        "11",
        "--theta",
        "1.0",
        "--theta2",
        "0.8",
        "--horizon",
        "6",
    ];
    assert_eq!(code(&run(a.path(), &args)), 0);
    assert_eq!(code(&run(b.path(), &args)), 0);
    for f in ["simulate.csv", "outcome.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let (header, body) = rows(&a.path().join("simulate.csv"));
    assert_eq!(header, "t,X,Y,alpha_of_Y");
    let x: Vec<f64> = body.iter().map(|r| num(&r[1])).collect();
    let y: Vec<f64> = body.iter().map(|r| num(&r[2])).collect();
    let alpha_y: Vec<f64> = body.iter().map(|r| num(&r[3])).collect();
    assert!(y.windows(2).all(|w| w[1] <= w[0]));
    // A drop in Y over a step needs X at the start of the step to be near
    // or inside the exit region of the current marginal type.
    for i in 0..y.len() - 1 {
        if y[i + 1] < y[i] {
            assert!(
                x[i] <= alpha_y[i] * 1.05,
                "row {i}: X {} vs alpha(Y) {}",
                x[i],
                alpha_y[i]
            );
        }
    }
    let outcome: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("outcome.json")).unwrap()).unwrap();
    assert_eq!(outcome["theta2"], 0.8);
}

#[test]
fn audit_passes_on_example() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        &[
            "audit",
            "--paths",
            "1500",
            "--seed",
            "3",
            "--theta",
            "1.0",
            "--deviations",
            "never,single,rect:1:0.8",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let reports: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("audit.json")).unwrap()).unwrap();
    assert_eq!(reports[0]["deviation_values"].as_array().unwrap().len(), 3);
}

#[test]
fn audit_rejects_small_monopoly_profit() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["audit", "--set", "m0=1.4"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("M0 > r theta_U"));
}

#[test]
fn empty_deviation_set_is_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["audit", "--deviations", ""])), 64);
}

#[test]
fn unknown_mode_and_bad_flags_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["special", "--mode", "sideways"])), 64);
    assert_eq!(code(&run(dir.path(), &["special"])), 64);
    assert_eq!(code(&run(dir.path(), &["bogus"])), 64);
    assert_eq!(code(&run(dir.path(), &["thresholds", "--seed", "x"])), 64);
    assert_eq!(code(&run(dir.path(), &["thresholds", "--set", "nope=1"])), 64);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
}

#[test]
fn region_grid_matches_request() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        &[
            "region",
            "--theta",
            "1.0",
            "--paths",
            "200",
            "--x-grid",
            "0.2,0.4,1.5",
            "--a-grid",
            "0,2",
        ],
    );
    assert!(code(&o) == 0 || code(&o) == 1);
    let (header, body) = rows(&dir.path().join("region.csv"));
    assert_eq!(header, "x,a,label,v_tilde,stderr,best_rule");
    assert_eq!(body.len(), 6);
    // Far from the boundary the labels are unambiguous.
    let label = |x: &str, a: &str| body.iter().find(|r| r[0] == x && r[1] == a).unwrap()[2].clone();
    assert_eq!(label("0.2", "2"), "STOP");
    assert_eq!(label("1.5", "0"), "CONTINUE");
}

#[test]
fn deterministic_schedule_nonincreasing() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["special", "--mode", "deterministic"]);
    assert_eq!(code(&o), 0);
    let (header, body) = rows(&dir.path().join("special_deterministic.csv"));
    assert_eq!(header, "theta,tau_hat");
    assert_eq!(body.len(), 100);
    let tau: Vec<f64> = body.iter().map(|r| num(&r[1])).collect();
    assert!(tau.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*tau.last().unwrap(), 0.0);
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# example\nseed = 5\ntheta = 0.9\nhorizon = 2\n").unwrap();
    let out = dir.path().join("o");
    let o = run(&out, &["simulate", "--config", cfg.to_str().unwrap(), "--seed", "6"]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], "6");
    assert_eq!(report["config"]["theta"], "0.9");
    let (_, body) = rows(&out.join("simulate.csv"));
    assert_eq!(body.len(), 2001);
}
