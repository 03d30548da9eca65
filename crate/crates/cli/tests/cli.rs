use std::path::PathBuf;
use std::process::{Command, Output};

fn obnox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obnox")).args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn eval_m3_on_det_fixture() {
    let out = obnox(&["eval", "--mech", "M3", &fixture("det_lower_bound.json")]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("outcome: (1, 0)"), "{text}");
    assert!(text.contains("social_utility: 1\n"), "{text}");
}

#[test]
fn eval_m2_reports_randomized_identity() {
    // n = 2, |N1 ∩ N2| = 1: (2 + 1)/2
    let out = obnox(&["eval", "--mech", "M2", "--format", "json", &fixture("mixed_zero_distance.json")]);
    assert_eq!(out.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["social_utility"], "3/2");
    assert_eq!(body["outcome"]["randomized"]["support"].as_array().unwrap().len(), 4);
}

#[test]
fn eval_exit_codes() {
    let out = obnox(&["eval", "--mech", "M1", &fixture("mixed_half_distance.json")]);
    assert_eq!(out.status.code(), Some(3));
    let out = obnox(&["eval", "--mech", "M9", &fixture("mixed_half_distance.json")]);
    assert_eq!(out.status.code(), Some(2));
    let out = obnox(&["eval", "--mech", "M3", "/nonexistent/instance.json"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn opt_with_grid_oracle() {
    let out = obnox(&["opt", "--resolution", "6", "--format", "json", &fixture("rand_lower_bound_shifted.json")]);
    assert_eq!(out.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["opt"]["value"], "7/6");
    assert_eq!(body["grid"]["value"], "7/6");
    assert_eq!(body["upper_bound"], "2");
}

#[test]
fn verify_generated_instances_passes() {
    let out = obnox(&["verify", "--count", "200", "--n", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["passed"], true);
    assert_eq!(body["mechanisms"].as_array().unwrap().len(), 4);
}

#[test]
fn verify_positive_distance_skips_zero_distance_mechanisms() {
    let out = obnox(&["verify", "--count", "20", "--d", "1/2"]);
    assert_eq!(out.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["mechanisms"][0]["skipped"], 20);
    assert_eq!(body["mechanisms"][2]["checked"], 20);
}

#[test]
fn verify_negative_control_fails() {
    let out = obnox(&["verify", "--mech", "BROKEN", "--count", "20"]);
    assert_eq!(out.status.code(), Some(1));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(body["mechanisms"][0]["sp_violations"].as_u64().unwrap() > 0);
}

#[test]
fn verify_malformed_json_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"d\": \"0\", \"agents\": [").unwrap();
    let out = obnox(&["verify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(&path, r#"{"d":"0","agents":[{"x":"3/2","p":[1,0]}]}"#).unwrap();
    let out = obnox(&["verify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("location out of [0,1] at index 0"));
}

#[test]
fn verify_fixture_files() {
    let out = obnox(&["verify", "--mech", "M3,M4", &fixture("det_lower_bound.json"), &fixture("mixed_half_distance.json")]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn probe_outputs() {
    let out = obnox(&["probe", "det", "--mech", "M3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("ratio: 2\n") && text.contains("meets bound 2: yes"), "{text}");

    let out = obnox(&["probe", "rand", "--mech", "M4"]);
    let text = stdout(&out);
    assert!(text.contains("ratio: 7/6\n") && text.contains("meets bound 14/13: yes"), "{text}");

    assert_eq!(obnox(&["probe", "rand", "--mech", "M3"]).status.code(), Some(3));
    assert_eq!(obnox(&["probe", "det", "--mech", "M2"]).status.code(), Some(3));
    assert_eq!(obnox(&["probe", "rand", "--mech", "M3", "--wrap"]).status.code(), Some(0));
}

#[test]
fn sweep_m4_respects_cap() {
    let out = obnox(&["sweep", "--mech", "M4", "--d", "0,1/4,1/2,1", "--count", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let headers = rows.headers().unwrap().clone();
    let max_idx = headers.iter().position(|h| h == "max_ratio_decimal").unwrap();
    let mut count = 0;
    for row in rows.records() {
        let row = row.unwrap();
        let max: f64 = row[max_idx].parse().unwrap();
        assert!(max <= 2.0);
        count += 1;
    }
    assert_eq!(count, 4);
}

#[test]
fn sweep_skips_and_usage_errors() {
    let out = obnox(&["sweep", "--mech", "M1", "--d", "1/2", "--count", "5"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).lines().nth(1).unwrap().ends_with(",skipped"));

    assert_eq!(obnox(&["sweep", "--d", "0"]).status.code(), Some(2));
    assert_eq!(obnox(&["sweep", "--mech", "M4", "--mix", "1/2,1/2"]).status.code(), Some(2));
}

#[test]
fn sweep_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let p = path.to_str().unwrap();
    let args = ["sweep", "--mech", "M3", "--d", "0,1/2", "--count", "30", "--seed", "4", "--out", p];
    assert_eq!(obnox(&args).status.code(), Some(0));
    let first = std::fs::read(&path).unwrap();
    assert_eq!(obnox(&args).status.code(), Some(0));
    assert_eq!(std::fs::read(&path).unwrap(), first);

    let unwritable = ["sweep", "--mech", "M3", "--count", "1", "--out", "/nonexistent/dir/out.csv"];
    assert_eq!(obnox(&unwritable).status.code(), Some(4));
}

#[test]
fn exhaustive_search_is_reproducible() {
    let args = ["search", "--mech", "M3", "--n", "3", "--d", "1/2", "--exhaustive", "--resolution", "4"];
    let first = obnox(&args);
    assert_eq!(first.status.code(), Some(0));
    let second = obnox(&args);
    assert_eq!(first.stdout, second.stdout);
    let body: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(body["result"]["cap_breach_count"], 0);
}

#[test]
fn search_single_agent_worst_case() {
    let out = obnox(&["search", "--mech", "M3", "--n", "1", "--d", "1/2", "--profile", "11", "--budget", "300"]);
    assert_eq!(out.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["result"]["best_ratio"], "2");
    assert_eq!(body["result"]["best_instance"]["agents"][0]["x"], "1/2");
}
