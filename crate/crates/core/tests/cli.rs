use std::path::PathBuf;
use std::process::{Command, Output};

const QUICK: &str = r#"{
  "search": {"n_starts": 2, "max_evals": 300},
  "finite": {"search": {"n_starts": 2, "max_evals": 300}}
}"#;

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("diqkd-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diqkd"))
        .args(args)
        .env("DIQKD_WORKERS", "1")
        .output()
        .unwrap()
}

fn quick_config() -> String {
    scratch("quick.json", QUICK).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn unknown_key_exits_with_2() {
    let cfg = scratch("bad.json", r#"{"scenario": {"eta_Q": 1.0}}"#);
    let o = run(&["threshold", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta_Q"));
}

#[test]
fn bad_scan_exits_with_2() {
    let o = run(&["chsh-scan", "--scan", "eta_tilde_L:0.9:1.0:1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["t-scan", "--scan", "L:0:10:3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn epsilon_constraint_exits_with_2() {
    let cfg = scratch(
        "eps.json",
        r#"{"finite": {"n": [1e10], "epsilons": {"eps_s_p": 1e-5}}}"#,
    );
    let o = run(&["finite-keylen", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_bracket_exits_with_3() {
    let cfg = quick_config();
    let o = run(&["threshold", "--config", &cfg, "--scan", "eta_L:0.5:0.6:2"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bracket"));
}

#[test]
fn chsh_scan_is_deterministic() {
    let cfg = quick_config();
    let args = [
        "chsh-scan",
        "--config",
        &cfg,
        "--scan",
        "eta_tilde_L=0.9,1.0",
        "--seed",
        "5",
    ];
    let a = stdout(&run(&args));
    let b = stdout(&run(&args));
    assert_eq!(a, b);
    let header: Vec<&str> = a.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 22);
    assert_eq!(&header[..3], ["eta_tilde_L", "S", "xi_amp_a1"]);
    assert_eq!(header[21], "alpha_phase_b3");
    assert_eq!(a.lines().count(), 3);
}

#[test]
fn rate_vs_distance_table() {
    let cfg = quick_config();
    let o = run(&[
        "rate-vs-distance",
        "--config",
        &cfg,
        "--scan",
        "L=0,100,200",
        "--asymptotic",
        "--n",
        "1e10",
    ]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("L_km,n,R_bits_per_s,scheme"));
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 12);
    let single: Vec<f64> = rows
        .iter()
        .filter(|r| r[1] == "inf" && r[3] == "single_photon")
        .map(|r| r[2].parse().unwrap())
        .collect();
    let double: Vec<f64> = rows
        .iter()
        .filter(|r| r[1] == "inf" && r[3] == "two_photon_scaling")
        .map(|r| r[2].parse().unwrap())
        .collect();
    for w in single.windows(2) {
        assert!(((w[0] / w[1]).log10() - 1.0).abs() < 1e-10);
    }
    for w in double.windows(2) {
        assert!(((w[0] / w[1]).log10() - 2.0).abs() < 1e-10);
    }
    assert!(rows.iter().any(|r| r[1] == "10000000000"));
}

#[test]
fn finite_keylen_report() {
    let cfg = quick_config();
    let out = scratch("finite.json", "");
    let o = run(&[
        "finite-keylen",
        "--config",
        &cfg,
        "--n",
        "1e3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("n = 1e3"));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((v["soundness"].as_f64().unwrap() - 3e-6).abs() < 1e-12);
    assert_eq!(v["completeness_target"].as_f64(), Some(0.01));
    let r = &v["results"][0];
    assert_eq!(r["ell"].as_f64(), Some(0.0));
    assert!(r["ell_raw"].as_f64().unwrap() < 0.0);
    assert_eq!(v["config"]["search"]["n_starts"].as_u64(), Some(2));
    assert_eq!(v["constants"]["key_overhead_bits"].as_f64(), Some(264.0));
    assert_eq!(v["epsilons"]["eps_EA"].as_f64(), Some(1e-6));
}
