use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_melnikov")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("melnikov-cli-{}-{name}", std::process::id()))
}

fn write_coeffs(name: &str, body: &str) -> PathBuf {
    let p = tmp(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(run(&["ect", "--b", "not-a-number"]).status.code(), Some(64));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn ect_reports_both_annuli() {
    let o = run(&["ect", "--family", "X29", "--b", "0", "--c", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.get("U-").is_some() && v.get("U+").is_some(), "{v}");
    let text = v.to_string();
    assert!(!text.contains("Partial"), "{text}");

    let o = run(&["ect", "--family", "X29", "--b", "1.5", "--c", "1.9"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["U+"].to_string().contains("Partial"), "{v}");
}

#[test]
fn invalid_parameters_fail() {
    // b >= c is outside the X29 family
    let o = run(&["ect", "--family", "X29", "--b", "1.5", "--c", "1.0"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn eval_of_zero_perturbation_is_zero() {
    let f = write_coeffs("zero.json", r#"{"family":"X29","b":0.0,"c":1.0,"n":3,"a":{},"b_coeffs":{}}"#);
    let o = run(&["eval", "--coeffs", f.to_str().unwrap(), "--grid", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("annulus,h,M_closed,M_oracle,abs_diff"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    for r in rows {
        let cols: Vec<f64> = r.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
        assert!(cols.iter().all(|x| x.abs() == 0.0), "{r}");
    }
}

#[test]
fn eval_closed_form_agrees_with_oracle() {
    let f = write_coeffs(
        "mixed.json",
        r#"{"family":"X29","b":0.5,"c":1.5,"n":3,"a":{"1,1":0.5,"0,3":-1.0},"b_coeffs":{"3,0":1.0,"0,0":0.25}}"#,
    );
    let o = run(&["eval", "--coeffs", f.to_str().unwrap(), "--annulus", "U+", "--grid", "8"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 9);
}

#[test]
fn realize_writes_a_certified_file() {
    let out = tmp("r00.json");
    let o = run(&["realize", "--b", "0", "--c", "1", "--u", "0", "--v", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let file: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(file["family"], "X29");
    // the written file evaluates cleanly
    let e = run(&["eval", "--coeffs", out.to_str().unwrap(), "--grid", "4"]);
    assert_eq!(e.status.code(), Some(0));
}

#[test]
fn three_three_is_refused_with_certificate() {
    let o = run(&["realize", "--b", "0", "--c", "1", "--u", "3", "--v", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.to_string().contains("witnesses"), "{v}");
}

#[test]
fn simulate_without_perturbation_has_no_displacement() {
    let f = write_coeffs("sim.json", r#"{"family":"X29","b":0.0,"c":1.0,"n":3,"a":{"1,1":1.0},"b_coeffs":{}}"#);
    let o = run(&["simulate", "--coeffs", f.to_str().unwrap(), "--eps", "0", "--grid", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("annulus,h,displacement,displacement_over_eps,m_prediction"));
    for r in lines {
        let d: f64 = r.split(',').nth(2).unwrap().parse().unwrap();
        assert!(d.abs() <= 1e-9, "{r}");
    }
}

#[test]
fn simulate_finds_the_single_cycle() {
    let out = tmp("r10.json");
    let o = run(&["realize", "--b", "0", "--c", "1", "--u", "1", "--v", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s = run(&["simulate", "--coeffs", out.to_str().unwrap(), "--eps", "1e-4", "--annulus", "U+", "--grid", "20"]);
    assert_eq!(s.status.code(), Some(0));
    let err = String::from_utf8_lossy(&s.stderr);
    let summary: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(summary["annuli"]["U+"]["count"], 1, "{summary}");
}

#[test]
fn certify_ect_suite_passes() {
    let o = run(&["certify", "--suite", "ect"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn eps_above_limit_is_rejected() {
    let f = write_coeffs("big.json", r#"{"family":"X29","b":0.0,"c":1.0,"n":3,"a":{"1,1":1.0},"b_coeffs":{}}"#);
    let o = run(&["simulate", "--coeffs", f.to_str().unwrap(), "--eps", "0.5"]);
    assert_ne!(o.status.code(), Some(0));
}
