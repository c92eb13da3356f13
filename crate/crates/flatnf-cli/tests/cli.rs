use std::path::Path;
use std::process::{Command, Output};

fn flatnf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatnf")).args(args).output().expect("spawn flatnf")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn square_torus_admissibility_reports_zero_hits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"schema":1,"metric":"square","dim":2,"M":2}"#);
    let out = flatnf(&["--config", &cfg, "admissibility"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "admissibility");
    assert_eq!(v["result"]["min_value"], 0.0);
    assert!(!v["result"]["zero_hits"].as_array().unwrap().is_empty());
}

#[test]
fn admissible_preset_has_no_nontrivial_resonances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"schema":1,"metric":"admissible","M":2,"kappa":0.1}"#);
    let out = flatnf(&["--config", &cfg, "resonances", "--q", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["nontrivial_resonant_count"], 0);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"schema":1,"#);
    let out = flatnf(&["--config", &cfg, "admissibility"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_field_is_named_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"schema":1,"metric":"square","epsilom":0.1}"#);
    let out = flatnf(&["--config", &cfg, "admissibility"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilom"));
}

#[test]
fn extra_term_outside_ball_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"schema":1,"metric":{"G":[[1.0]]},"M":2,"xi":[0.001,0.001,0.001,0.001,0.001],
            "extras":[{"vectors":[[5],[-5],[1],[-1],[-2],[2]],"re":1.0,"im":0.0}]}"#,
    );
    let out = flatnf(&["--config", &cfg, "normal-form"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extras[0]"));
}

#[test]
fn enumeration_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"schema":1,"metric":"admissible","M":30,"kappa":0.1}"#);
    let out = flatnf(&["--config", &cfg, "resonances", "--q", "3"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn quick_selftest_passes() {
    let out = flatnf(&["selftest", "--quick"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["result"]["passed"], true);
}

#[test]
fn normal_form_decreases_ysup() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"schema":1,"metric":{"G":[[1.0]]},"M":2,"xi":[0.0005,0.002,0.004,0.01,0.001],
            "extras":[{"vectors":[[1],[-1],[1],[-1],[-2],[2]],"re":1.0,"im":0.0},
                      {"vectors":[[-1],[1],[-1],[1],[2],[-2]],"re":1.0,"im":0.0}]}"#,
    );
    let out = flatnf(&["--config", &cfg, "normal-form", "--steps", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let steps = json(&out)["result"]["steps"].as_array().unwrap().clone();
    assert_eq!(steps.len(), 3);
    for s in &steps {
        assert!(s["lambda_ysup_after"].as_f64().unwrap() < s["lambda_ysup_before"].as_f64().unwrap());
    }
}

#[test]
fn simulate_writes_csv_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"schema":1,"metric":"admissible","M":2,"seed":7,"simulation":{"T":2,"dt":0.01,"stride":20}}"#,
    );
    let run = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = flatnf(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "simulate"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        (std::fs::read(out_dir.join("simulate.json")).unwrap(), std::fs::read(out_dir.join("simulate.csv")).unwrap())
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let csv = String::from_utf8(a.1).unwrap();
    assert!(csv.starts_with("t,mass,energy,hs_norm,action_dev,superaction_dev,recentered_sum"));
    assert_eq!(csv.lines().count(), 1 + 11);
}

#[test]
fn measure_is_deterministic_in_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"schema":1,"metric":"admissible","M":2,"degree_cap":4}"#);
    let a = flatnf(&["--config", &cfg, "--seed", "11", "measure", "--samples", "50", "--gamma", "0.01"]);
    let b = flatnf(&["--config", &cfg, "--seed", "11", "measure", "--samples", "50", "--gamma", "0.01"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["seed"], 11);
}

#[test]
fn bad_gamma_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"schema":1,"metric":"admissible","M":2}"#);
    let out = flatnf(&["--config", &cfg, "measure", "--gamma", "soon"]);
    assert_eq!(out.status.code(), Some(2));
}
