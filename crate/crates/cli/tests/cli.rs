use std::process::{Command, Output};

use serde_json::Value;

fn sigcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigcode")).args(args).output().expect("binary runs")
}

fn error_record(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(2));
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON record")
}

#[test]
fn two_user_optimum() {
    let out = sigcode(&["smg", "--two-user-optimum", "--format", "json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["K"], 2);
    assert!((v["epsilon"].as_f64().unwrap() - 0.756).abs() < 0.002);
    assert!((v["smg"].as_f64().unwrap() - 0.7091).abs() < 0.0005);
}

#[test]
fn validation_failures_are_reported() {
    let v = error_record(&sigcode(&["smg", "--epsilon", "0"]));
    assert_eq!(v["error"], "validation");
    assert!(v["detail"].as_array().unwrap().iter().any(|m| m == "epsilon must be in (0,1]"));

    let v = error_record(&sigcode(&["smg", "--alphabet", "1,2"]));
    assert!(v["detail"][0].as_str().unwrap().contains("sign-symmetric"));

    let v = error_record(&sigcode(&["rate", "--k", "14", "--alphabet", "-2,-1,1,2", "--epsilon", "0.5"]));
    assert!(v["detail"][0].as_str().unwrap().contains("1000000"));

    let v = error_record(&sigcode(&["infer"]));
    assert!(v["detail"][0].as_str().unwrap().contains("case"));
}

#[test]
fn nothing_written_on_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let out = sigcode(&["smg", "--epsilon", "1.5", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!path.exists());
}

#[test]
fn outputs_are_reproducible_and_carry_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let out = sigcode(&["figures", "fig2", "--trials", "2000", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        p
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    let da = std::fs::read(&a).unwrap();
    assert_eq!(da, std::fs::read(&b).unwrap());
    let text = String::from_utf8(da).unwrap();
    assert!(text.starts_with("n,smg_masked,smg_unmasked,stderr_masked,stderr_unmasked\n"));
    assert_eq!(text.lines().count(), 10);

    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["figure"], "fig2");
    assert_eq!(m["config"]["trials"], 2000);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "k = 3\nn = 3\nepsilon = 0.25\nformat = \"json\"\n").unwrap();
    let out = sigcode(&["smg", "--config", cfg.to_str().unwrap(), "--epsilon", "0.5"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["K"], 3);
    assert_eq!(v[0]["epsilon"], 0.5);

    std::fs::write(&cfg, "colour = 1\n").unwrap();
    let v = error_record(&sigcode(&["smg", "--config", cfg.to_str().unwrap()]));
    assert_eq!(v["error"], "config");
}

#[test]
fn sweep_and_rate_tables() {
    let out = sigcode(&["figures", "f77", "--k-values", "1,2", "--nu-grid", "0.1,0.5,0.9", "--mc-draws", "100"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("nu,K,epsilon,expected_rate,stderr"));
    assert_eq!(lines.count(), 6);

    let out = sigcode(&["rate", "--gamma-db-range", "0,20,10", "--gains", "1,0.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("gamma_db,rate,mg,ief,csf,stderr"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn inference_roundtrip_command() {
    for case in ["1", "2", "3", "4"] {
        let out = sigcode(&["infer", "--case", case, "--n", "3", "--draws", "5", "--format", "json"]);
        assert!(out.status.success(), "case {case}: {}", String::from_utf8_lossy(&out.stderr));
        let rows: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(rows.len(), 5);
        for r in rows {
            assert_eq!(r["n_est"], 3);
            assert!(r["max_rel_err"].as_f64().unwrap() < 1e-9);
        }
    }
}
