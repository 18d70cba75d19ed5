use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lemie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lemie"))
        .args(args)
        .env("RUST_LOG", "error")
        .env("LEMIE_THREADS", "1")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let text = format!(
        r#"{{"id":"cli_beta","model":{{"kind":"beta_bernoulli","n":120,"design":"half_split"}},
            "parts":3,"draws_per_part":500,"methods":["naive","mie2","cmc1"],"seed":4,
            "truth":{{"draws":500}}{extra}}}"#
    );
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_results_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = lemie(&["run", &config, "--out-dir", out.to_str().unwrap(), "--keep-weights"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["results.csv", "summary.csv", "manifest.json", "weights/mie2.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["M"], 3);
    assert_eq!(manifest["communication"]["messages"], 9);

    let o = lemie(&["diagnose", out.join("weights/mie2.csv").to_str().unwrap()]);
    assert!(o.status.success());
    let diag: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(diag["draws"], 1500);
    let ess = diag["ess"].as_f64().unwrap();
    assert!(ess > 1.0 && ess <= 1500.0);
}

#[test]
fn method_override_and_seed_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = lemie(&[
        "run", &config, "--out-dir", out.to_str().unwrap(), "--methods", "mie1,lemie2_t1", "--laplace-types", "1",
        "--seed", "99",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["methods"], serde_json::json!(["mie1", "lemie2_t1"]));
    assert_eq!(manifest["seeds"]["seed"], 99);
}

#[test]
fn configuration_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#","colour":"blue""#);
    assert_eq!(lemie(&["run", &config]).status.code(), Some(3));
    assert_eq!(lemie(&["run", "/no/such/config.json"]).status.code(), Some(3));
    let config = write_config(dir.path(), "");
    assert_eq!(lemie(&["run", &config, "--methods", "lemie2_t3"]).status.code(), Some(3));
}

#[test]
fn failed_methods_exit_with_two_but_still_write() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#","kde_bandwidth":{"theta":[-0.1]}"#);
    let out = dir.path().join("out");
    let o = lemie(&["run", &config, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.contains("failed"));
}

#[test]
fn truth_prints_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let o = lemie(&["truth", &config]);
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["targets"][0]["name"], "theta");
    let mean = summary["targets"][0]["mean"][0].as_f64().unwrap();
    assert!(mean > 0.0 && mean < 1.0);
}

#[test]
fn sweep_writes_one_directory_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#","sweep":{"parts":[1,2]}"#);
    let out = dir.path().join("out");
    let o = lemie(&["sweep", &config, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("M1_N500/manifest.json").exists());
    assert!(out.join("M2_N500/results.csv").exists());
    assert!(out.join("results.csv").exists());
}
