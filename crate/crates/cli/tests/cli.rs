use std::process::{Command, Output};

fn tomobell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tomobell"))
        .args(args)
        .env_remove("TOMOBELL_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn simulate_prints_json_report() {
    let o = tomobell(&["simulate", "--samples", "50000", "--blocks", "10", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["config"]["samples"], 50000);
    assert!(v["bell"]["value"].as_f64().unwrap().is_finite());
    assert!((v["analytic"]["bell"].as_f64().unwrap() - 2.0f64.powf(1.5)).abs() < 1e-6);
}

#[test]
fn sweep_csv_is_reproducible_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "samples = 999\nseed = 4\nblocks = 10\n[sweep]\nvariable = \"phi\"\nsteps = 3\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let run = |workers: &str, out: &str| {
        let path = dir.path().join(out);
        let o = tomobell(&[
            "sweep-phi", "--config", cfg, "--samples", "40000", "--workers", workers, "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(path).unwrap()
    };
    let a = run("1", "a.csv");
    assert_eq!(a, run("1", "b.csv"));
    assert_eq!(a, run("3", "c.csv"));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("variable,point,value,status,B,sigma_B"));
    assert!(lines[1].starts_with("phi,0,0,ok,"));
    assert!(lines[1].ends_with(",40000,10,4"));
}

#[test]
fn worker_count_from_environment() {
    let base = ["simulate", "--samples", "20000", "--blocks", "4", "--format", "csv"];
    let a = tomobell(&base);
    let b = Command::new(env!("CARGO_BIN_EXE_tomobell"))
        .args(base)
        .env("TOMOBELL_WORKERS", "2")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let zero = Command::new(env!("CARGO_BIN_EXE_tomobell"))
        .args(base)
        .env("TOMOBELL_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    assert_eq!(tomobell(&["simulate", "--eta", "0.4"]).status.code(), Some(2));
    assert_eq!(
        tomobell(&["simulate", "--lambda", "0.5", "--mean-photon", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(tomobell(&["sweep-eta", "--values", "0.6,0.45"]).status.code(), Some(2));
    assert_eq!(tomobell(&["simulate", "--lambda", "0", "--samples", "100"]).status.code(), Some(3));
    let o = tomobell(&["simulate", "--samples", "100", "--out", "/nonexistent/dir/r.json"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(tomobell(&["simulate", "--config", "/nonexistent.toml"]).status.code(), Some(4));
}

#[test]
fn bad_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "lambda = 0.3\nmean_photon = 0.2\n").unwrap();
    let o = tomobell(&["oracle", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exactly one of lambda or mean_photon"));
    // a flag replaces the file's gain
    let o = tomobell(&["oracle", "--config", cfg.to_str().unwrap(), "--lambda", "0.4"]);
    assert!(o.status.success());
}

#[test]
fn oracle_no_violation_at_quarter_phase() {
    let o = tomobell(&["oracle", "--crystal-phase", "1.5707963267948966", "--eta", "1"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["bell"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-6);
}

#[test]
fn dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.csv");
    let o = tomobell(&[
        "simulate", "--samples", "1000", "--blocks", "2", "--dump-samples",
        path.to_str().unwrap(), "--dump-format", "csv",
    ]);
    assert!(o.status.success());
    let events = tomobell::dump::read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(events.len(), 1000);
}

#[test]
fn selftest_small() {
    let o = tomobell(&["selftest", "--samples", "20000", "--gof-draws", "3"]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(3));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["unbiasedness"].as_array().unwrap().len(), 9);
    assert_eq!(v["goodness_of_fit"].as_array().unwrap().len(), 3);
}
