use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn hmmcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmmcd"))
        .args(args)
        .env_remove("HMMCD_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn discrete_model() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data/discrete.json")
        .display()
        .to_string()
}

#[test]
fn calibrate_gaussian_at_1000() {
    let r = json(&hmmcd(&["calibrate", "--alpha", "0.5", "--mu", "1", "--sigma2", "0.5", "--gamma", "1000"]));
    let row = &r["results"][0];
    assert!((row["nu2"].as_f64().unwrap() - 3.29053).abs() < 1e-5);
    assert!((row["beta2"].as_f64().unwrap() - 0.00722).abs() < 1e-5);
    assert_eq!(row["prior"]["support"][0].as_f64().unwrap(), -1.0);
    assert_eq!(r["config"]["model"]["kind"], "gaussian");
}

#[test]
fn gamma_one_is_a_config_error() {
    let out = hmmcd(&["calibrate", "--gamma", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn invalid_model_parameter_names_the_field() {
    let out = hmmcd(&["calibrate", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn discrete_oracle_matches_solver() {
    let model = discrete_model();
    let a = json(&hmmcd(&["calibrate", "--model", &model, "--gamma", "50"]));
    let b = json(&hmmcd(&["calibrate", "--model", &model, "--gamma", "50", "--oracle"]));
    let (a, b) = (&a["results"][0], &b["results"][0]);
    for key in ["nu1", "nu2", "q1", "q2", "beta1", "beta2", "beta1_tilde", "beta2_tilde"] {
        let (x, y) = (a[key].as_f64().unwrap(), b[key].as_f64().unwrap());
        assert!((x - y).abs() <= 1e-9, "{key}: {x} vs {y}");
    }
    assert_eq!(a["prior"]["support"], b["prior"]["support"]);
    for (x, y) in a["prior"]["weights"].as_array().unwrap().iter().zip(b["prior"]["weights"].as_array().unwrap()) {
        assert!((x.as_f64().unwrap() - y.as_f64().unwrap()).abs() <= 1e-9);
    }
}

#[test]
fn figure1_default_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig.csv");
    let out = hmmcd(&["figure1", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "gamma,nu1,nu2,beta1,beta2,beta1_tilde,beta2_tilde");
    assert_eq!(lines.len(), 61);
    assert!(lines[1].starts_with("1.0500000000e+00,"));
    assert!(lines[60].starts_with("1.0000000000e+03,"));
}

#[test]
fn figure1_limit_row_only_on_request() {
    let with = hmmcd(&["figure1", "--limit-row", "--gamma", "2:10:3"]);
    let text = String::from_utf8(with.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().nth(1).unwrap().starts_with("1.0000000000e+00,"));
}

#[test]
fn figure1_is_deterministic() {
    assert_eq!(hmmcd(&["figure1"]).stdout, hmmcd(&["figure1"]).stdout);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let out = hmmcd(&["figure1", "--out", "/nonexistent-dir/fig.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_state_adversary_passes() {
    let r = json(&hmmcd(&[
        "simulate", "--detector", "s2", "--adversary", "state", "--gamma", "100", "--trials", "200000", "--seed", "42",
    ]));
    let row = &r["results"][0];
    assert_eq!(row["detection"]["verdict"], "PASS");
    assert_eq!(row["arl"]["verdict"], "PASS");
    assert_eq!(row["equalizer"]["verdict"], "PASS");
    assert_eq!(r["config"]["seed"], 42);
}

#[test]
fn simulate_is_byte_deterministic() {
    let args = ["simulate", "--detector", "s1", "--trials", "20000", "--seed", "5"];
    assert_eq!(hmmcd(&args).stdout, hmmcd(&args).stdout);
}

#[test]
fn simulate_discrete_model() {
    let model = discrete_model();
    let r = json(&hmmcd(&["simulate", "--model", &model, "--gamma", "20", "--trials", "50000"]));
    let row = &r["results"][0];
    assert_eq!(row["detection"]["verdict"], "PASS");
    assert_eq!(row["arl"]["verdict"], "PASS");
}

#[test]
fn too_few_trials_rejected() {
    let out = hmmcd(&["simulate", "--trials", "100"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_hmmcd"))
        .args(["calibrate"])
        .env("HMMCD_SEED", "77")
        .output()
        .unwrap();
    let r = json(&out);
    assert_eq!(r["config"]["seed"], 77);
    assert_eq!(r["config"]["seed_source"], "env");
}

#[test]
fn config_file_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"gamma": "2:50:4", "seed": 11}"#).unwrap();
    let r = json(&hmmcd(&["calibrate", "--config", path.to_str().unwrap()]));
    assert_eq!(r["results"].as_array().unwrap().len(), 4);
    assert_eq!(r["config"]["seed_source"], "config");
}

#[test]
fn verify_default_corpus_passes() {
    let out = hmmcd(&["verify", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let control = r["results"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["expect_fail"] == true)
        .unwrap();
    assert_eq!(control["passed"], true);
    let again = hmmcd(&["verify", "--seed", "7"]);
    assert_eq!(out.stdout, again.stdout);
}
