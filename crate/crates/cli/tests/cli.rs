use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dirlab"))
}

fn instance(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../instances")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn check_form_two_point_passes() {
    let inst = instance("two_point_p2.toml");
    let o = run(&["--instance", inst.to_str().unwrap(), "check-form", "--samples", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("check_name,instance,parameters,lhs,rhs,constant,margin,pass\n"));
    assert_eq!(out.lines().count(), 5);
}

#[test]
fn non_dirichlet_fixture_fails_with_counterexample() {
    let inst = instance("fixtures/non_dirichlet.toml");
    let o = run(&["--instance", inst.to_str().unwrap(), "check-form", "--samples", "200"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    let row = out
        .lines()
        .find(|l| l.starts_with("submodularity:counterexample"))
        .expect("counterexample row");
    assert!(row.contains("u=[1.0,0.0];v=[0.0,1.0]"), "{row}");
}

#[test]
fn malformed_instance_exits_2_with_line() {
    let inst = instance("fixtures/malformed.toml");
    let o = run(&["--instance", inst.to_str().unwrap(), "check-form"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 6"), "{}", stderr(&o));
}

#[test]
fn capacity_values_and_unknown_id() {
    let inst = instance("two_point_p2.toml");
    let inst = inst.to_str().unwrap();
    let value = |set: &str| -> f64 {
        let o = run(&["--instance", inst, "capacity", "--set", set]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o).trim().strip_prefix("capacity = ").unwrap().parse().unwrap()
    };
    assert!((value("a") - 1.154701).abs() < 1e-5);
    assert_eq!(value(""), 0.0);
    let o = run(&["--instance", inst, "capacity", "--set", "a,zz"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn capacity_witness_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.csv");
    let inst = instance("two_point_p2.toml");
    let o = run(&[
        "--instance",
        inst.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "capacity",
        "--set",
        "a",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("id,witness"));
    let a: f64 = lines.next().unwrap().strip_prefix("a,").unwrap().parse().unwrap();
    assert!(a >= 1.0 - 1e-9);
}

#[test]
fn resolve_two_point() {
    let inst = instance("two_point_p2.toml");
    let f = instance("fixtures/f_two_point.txt");
    let o = run(&[
        "--instance",
        inst.to_str().unwrap(),
        "resolve",
        "--lambda",
        "2",
        "--f",
        f.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "u = (0.375000000, 0.125000000)");
}

#[test]
fn flow_from_zero_stays_zero() {
    let dir = tempfile::tempdir().unwrap();
    let u0 = dir.path().join("u0.txt");
    std::fs::write(&u0, "0\n0\n0\n").unwrap();
    let inst = instance("path3_p2.toml");
    let o = run(&[
        "--instance",
        inst.to_str().unwrap(),
        "flow",
        "--u0",
        u0.to_str().unwrap(),
        "--t",
        "1",
        "--steps",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("step,t,energy,x0,x1,x2"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert!(cols[2..].iter().all(|c| *c == "0.0"), "{row}");
    }
}

#[test]
fn wrong_value_count_is_usage_error() {
    let inst = instance("path3_p2.toml");
    let f = instance("fixtures/f_two_point.txt");
    let o = run(&[
        "--instance",
        inst.to_str().unwrap(),
        "resolve",
        "--lambda",
        "1",
        "--f",
        f.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oversized_scan_needs_approx() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path13.toml");
    let mut text = String::from("[space]\npoints = [\n");
    for i in 0..13 {
        text.push_str(&format!("  {{ id = \"n{i}\", measure = 1.0 }},\n"));
    }
    text.push_str("]\n[form]\nkind = \"p_energy\"\np = 2.0\nedges = [\n");
    for i in 1..13 {
        text.push_str(&format!("  {{ i = \"n{}\", j = \"n{i}\", w = 1.0 }},\n", i - 1));
    }
    text.push_str("]\n");
    std::fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap();
    let o = run(&["--instance", p, "scan-isocap", "--q", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--approx"), "{}", stderr(&o));
    let o = run(&["--instance", p, "scan-isocap", "--q", "4", "--approx", "40"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("sampled lower bound"));
}

#[test]
fn missing_instance_and_bad_flags() {
    assert_eq!(run(&["check-form"]).status.code(), Some(2));
    let inst = instance("two_point_p2.toml");
    let o = run(&["--instance", inst.to_str().unwrap(), "embed", "--mode", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["--instance", inst.to_str().unwrap(), "contraction", "--tgrid", "2,1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_cap_does_not_change_output() {
    let inst = instance("ring8_p3.toml");
    let args = ["--instance", inst.to_str().unwrap(), "scan-isocap", "--q", "4"];
    let a = bin().args(args).env("DIRLAB_THREADS", "1").output().unwrap();
    let b = bin().args(args).output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let bad = bin().args(args).env("DIRLAB_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn smoothing_hypothesis_violation_exits_1() {
    let inst = instance("ring8_p2_grounded.toml");
    let o = run(&[
        "--instance",
        inst.to_str().unwrap(),
        "smoothing",
        "--p",
        "4",
        "--sigma",
        "2",
        "--c1",
        "1e-6",
        "--train",
        "4",
        "--held-out",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hypothesis violated"), "{}", stderr(&o));
}

#[test]
fn poincare_reports_kernel() {
    let inst = instance("ring8_p3.toml");
    let o = run(&["--instance", inst.to_str().unwrap(), "poincare"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kernel"));
    let inst = instance("ring8_p2_grounded.toml");
    let o = run(&["--instance", inst.to_str().unwrap(), "poincare", "--samples", "200"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("poincare constant = "));
}
