use std::path::Path;
use std::process::{Command, Output};

fn hetq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const SEC6: [&str; 8] = ["--k", "3", "--rho-i", "0.3", "--lambda-t", "5.6", "--mu-t", "8"];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run(args: Vec<String>) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    hetq(&refs)
}

#[test]
fn analyze_ps_best_point() {
    let o = run(with(&["analyze", "--policy", "ps", "--p", "1"], &SEC6));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("p,p_block,e_sojourn,stable,source,ci_halfwidth\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 1);
    let pb: f64 = rows[0][1].parse().unwrap();
    let s: f64 = rows[0][2].parse().unwrap();
    assert!((pb - 0.019).abs() < 1e-3);
    assert!((s - 21.87).abs() < 0.01);
    assert_eq!(rows[0][4], "formula-sfj");
}

#[test]
fn analyze_cd_without_admission_is_mm1() {
    let o = run(with(&["analyze", "--policy", "cd", "--p", "0"], &SEC6));
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[0][1], "1");
    let s: f64 = rows[0][2].parse().unwrap();
    assert!((s - 1.0 / 2.4).abs() < 1e-11);
}

#[test]
fn analyze_with_rates_adds_bounds_and_oracle() {
    let o = hetq(&[
        "analyze",
        "--policy",
        "ps",
        "--p",
        "0.5",
        "--k",
        "3",
        "--lambda-i",
        "30",
        "--mu-i",
        "100",
        "--lambda-t",
        "5.6",
        "--mu-t",
        "8",
        "--oracle",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&stdout(&o));
    let sources: Vec<&str> = rows.iter().map(|r| r[4].as_str()).collect();
    assert_eq!(sources, ["formula-sfj", "bound-lower", "bound-upper", "oracle"]);
    let s: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(s[1] <= s[3] && s[3] <= s[2]);
}

#[test]
fn missing_field_is_a_usage_error() {
    let o = hetq(&[
        "analyze",
        "--policy",
        "ps",
        "--p",
        "1",
        "--k",
        "3",
        "--rho-i",
        "0.3",
        "--lambda-t",
        "5.6",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mu_t"));
    let o = hetq(&["analyze", "--policy", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    let o = hetq(&[
        "analyze",
        "--policy",
        "ps",
        "--p",
        "1.5",
        "--k",
        "3",
        "--rho-i",
        "0.3",
        "--lambda-t",
        "1",
        "--mu-t",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(hetq(&["--help"]).status.code(), Some(0));
}

#[test]
fn unstable_exits_two_with_reason() {
    let o = hetq(&[
        "analyze",
        "--policy",
        "ps",
        "--p",
        "1",
        "--k",
        "3",
        "--rho-i",
        "0.3",
        "--lambda-t",
        "5.7",
        "--mu-t",
        "8",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    let json_line = err.lines().find(|l| l.starts_with('{')).unwrap();
    let v: serde_json::Value = serde_json::from_str(json_line).unwrap();
    assert_eq!(v["error"], "unstable");
    assert!(v["reason"].as_str().unwrap().contains(">= 1"));
}

#[test]
fn solve_hits_target_and_reports_unreachable() {
    let o = hetq(&[
        "solve",
        "--policy",
        "ps",
        "--k",
        "3",
        "--rho-i",
        "0.3",
        "--target-pb",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema"], "hetq.solve/1");
    assert!((v["p_block"].as_f64().unwrap() - 0.5).abs() < 1e-9);

    let o = hetq(&[
        "solve",
        "--policy",
        "cd",
        "--k",
        "3",
        "--rho-i",
        "0.3",
        "--target-pb",
        "0.01",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("best_p_block"));
}

#[test]
fn validate_reports_conservation_and_sandwich() {
    let o = hetq(&[
        "validate",
        "--policy",
        "cd",
        "--p",
        "1",
        "--k",
        "3",
        "--rho-i",
        "0.3",
        "--lambda-t",
        "5.6",
        "--mu-t",
        "8",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema"], "hetq.validate/1");
    assert!(v["max_conservation_deviation"].as_f64().unwrap() < 1e-10);

    let o = hetq(&[
        "validate",
        "--policy",
        "ps",
        "--p",
        "0.3",
        "--k",
        "3",
        "--lambda-i",
        "6",
        "--mu-i",
        "20",
        "--lambda-t",
        "2",
        "--mu-t",
        "8",
        "--reps",
        "4",
        "--horizon-arrivals",
        "20000",
        "--seed",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["sandwich"]["oracle_contained"], true);
    assert_eq!(v["sandwich"]["simulation"]["contained"], true);
}

#[test]
fn simulate_divergence_exits_three() {
    let o = hetq(&[
        "simulate",
        "--policy",
        "ps",
        "--p",
        "1",
        "--k",
        "2",
        "--lambda-i",
        "5",
        "--mu-i",
        "10",
        "--lambda-t",
        "3",
        "--mu-t",
        "2",
        "--reps",
        "2",
        "--horizon-arrivals",
        "3000000",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"divergence\""));
}

#[test]
fn region_sweeps_and_bad_sweeps() {
    let o = run(with(&["region", "--policy", "ps", "--grid", "11"], &SEC6));
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 11);
    let last_pb: f64 = rows[10][1].parse().unwrap();
    assert!((last_pb - 0.019).abs() < 5e-4);

    let o = run(with(&["region", "--policy", "cd", "--grid", "11"], &SEC6));
    let rows = csv_rows(&stdout(&o));
    let last_pb: f64 = rows[10][1].parse().unwrap();
    assert!((last_pb - 0.05).abs() < 5e-4);

    let o = hetq(&[
        "region",
        "--policy",
        "conservation",
        "--rho-i",
        "0.3",
        "--lambda-t",
        "5.6",
        "--mu-t",
        "8",
        "--grid",
        "51",
    ]);
    let s: Vec<f64> = csv_rows(&stdout(&o)).iter().filter_map(|r| r[2].parse().ok()).collect();
    assert_eq!(s.len(), 50);
    for w in s.windows(3) {
        assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
    }

    let o = run(with(&["region", "--policy", "ps", "--grid", "1"], &SEC6));
    assert_eq!(o.status.code(), Some(1));
    let o = run(with(&["region", "--policy", "ps", "--sweep", "p-block"], &SEC6));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dump_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.json");
    let o = hetq(&[
        "simulate",
        "--policy",
        "dynamic-ps",
        "--p",
        "0.5",
        "--k",
        "4",
        "--rho-i",
        "0.225",
        "--mu-i",
        "200",
        "--lambda-t",
        "5.6",
        "--mu-t",
        "8",
        "--seed",
        "42",
        "--reps",
        "3",
        "--grid",
        "9",
        "--dump-config",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let a = std::fs::read_to_string(&first).unwrap();
    let o = hetq(&["simulate", "--config", first.to_str().unwrap(), "--dump-config"]);
    assert_eq!(stdout(&o), a);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["sim"]["seed"], 42);
    assert_eq!(v["sweep"]["grid"], 9);

    // Flags override the file.
    let o = hetq(&[
        "analyze",
        "--config",
        first.to_str().unwrap(),
        "--policy",
        "ps",
        "--dump-config",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["policy"], "ps");
    assert_eq!(v["k"], 4);
}

#[test]
fn simulate_is_deterministic_and_respects_thread_count() {
    let args = [
        "simulate",
        "--policy",
        "cd",
        "--p",
        "0.8",
        "--k",
        "3",
        "--lambda-i",
        "3",
        "--mu-i",
        "10",
        "--lambda-t",
        "2",
        "--mu-t",
        "8",
        "--seed",
        "42",
        "--reps",
        "4",
        "--horizon-arrivals",
        "5000",
    ];
    let a = hetq(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_hetq"))
        .args(args)
        .env("HETQ_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["schema"], "hetq.simulate/1");
    assert_eq!(v["estimate"]["reps"], 4);

    let bad = Command::new(env!("CARGO_BIN_EXE_hetq"))
        .args(args)
        .env("HETQ_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let o = run(with(
        &[
            "region",
            "--policy",
            "ps",
            "--grid",
            "5",
            "--out",
            path.to_str().unwrap(),
        ],
        &SEC6,
    ));
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert!(Path::new(&path).exists());
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 6);
}
