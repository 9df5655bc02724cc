use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn singbif(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_singbif")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn problem(dir: &Path, name: &str, g: &str, f: &str, params: &str) -> String {
    let path = dir.join(name);
    let text = format!("[domain]\nkind=interval a=0 b=1 n=64\n[g]\n{g}\n[f]\n{f}\n[params]\n{params}\n");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn shifted(dir: &Path, name: &str, lambda: f64) -> String {
    problem(dir, name, "family=power_shift alpha=0.5 a0=1", "family=const", &format!("lambda={lambda} mu=1 p=2"))
}

fn value_after(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no `{key}` in {text}"));
    line[key.len()..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn eigen_on_unit_interval() {
    let o = singbif(&["eigen", "--domain", "interval:0:1:256"]);
    assert_eq!(o.status.code(), Some(0));
    let l1 = value_after(&stdout(&o), "lambda1");
    assert!((l1 / std::f64::consts::PI.powi(2) - 1.0).abs() < 1e-3, "{l1}");
}

#[test]
fn keller_osserman_value() {
    let o = singbif(&["ko", "--g", "power(alpha=0.5)"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    // closed form (1-α)^½ · 2/(1+α) at α = ½
    let want = 0.5f64.sqrt() * 2.0 / 1.5;
    assert!((value_after(&out, "value") - want).abs() < 1e-6);
    assert!(out.contains("satisfied"));
}

#[test]
fn supercritical_problem_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // λ(a+μ) = 7.4·2 > π²
    let p = shifted(dir.path(), "super.prob", 7.4);
    let json = dir.path().join("verdict.json");
    let o = singbif(&["solve", "--problem", &p, "--out", json.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("verdict numerically_nonexistent"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["outcome"], "numerically_nonexistent");
    for key in ["method", "verdict", "solution", "residual_inf", "tol_used", "iterations", "history", "detail"] {
        assert!(v["report"].get(key).is_some(), "missing {key}");
    }
    assert!(v["attempts"].as_array().unwrap().len() >= 3);
}

#[test]
fn subcritical_solve_writes_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = shifted(dir.path(), "sub.prob", 2.0);
    let csv = dir.path().join("u.csv");
    let o = singbif(&["solve", "--problem", &p, "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().next(), Some("x,value"));
    assert_eq!(text.lines().count(), 65);
}

#[test]
fn usage_and_parse_errors_exit_two() {
    assert_eq!(singbif(&["eigen", "--bogus"]).status.code(), Some(2));
    assert_eq!(singbif(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let p = problem(dir.path(), "bad.prob", "family=power alpha=0.5", "family=const", "lambda=1 mu=1 p=2.5");
    let o = singbif(&["solve", "--problem", &p]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 8") && err.contains("(0, 2]"), "{err}");
    assert_eq!(singbif(&["ko", "--g", "cubic(alpha=1)"]).status.code(), Some(2));
}

#[test]
fn sweep_modes_agree() {
    let dir = tempfile::tempdir().unwrap();
    let p = shifted(dir.path(), "s.prob", 0.0);
    let warm = dir.path().join("warm.csv");
    let o = singbif(&["sweep", "--problem", &p, "--values", "1,3,8", "--out", warm.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o2 = singbif(&["sweep", "--problem", &p, "--values", "1,3,8", "--parallel"]);
    let text = fs::read_to_string(warm).unwrap();
    assert_eq!(text, stdout(&o));
    assert_eq!(
        text.lines().next(),
        Some("param,outcome,sup_norm,center_value,ratio_min,ratio_max,iterations,residual")
    );
    let outcomes = |t: &str| t.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(outcomes(&text), vec!["exists", "exists", "numerically_nonexistent"]);
    assert_eq!(outcomes(&text), outcomes(&stdout(&o2)));
    assert_eq!(singbif(&["sweep", "--problem", &p, "--values", "3,1"]).status.code(), Some(2));
}

#[test]
fn bisect_is_deterministic_and_reports_bad_brackets() {
    let dir = tempfile::tempdir().unwrap();
    let p = shifted(dir.path(), "b.prob", 0.0);
    let run = |name: &str| {
        let path = dir.path().join(name);
        let o = singbif(&[
            "bisect",
            "--problem",
            &p,
            "--lo",
            "0",
            "--hi",
            "10",
            "--tol",
            "1e-3",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        fs::read(path).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
    let o = singbif(&["bisect", "--problem", &p, "--lo", "0", "--hi", "1", "--tol", "1e-3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("no threshold in range"));
}

#[test]
fn supersolution_round_trip_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem(dir.path(), "p.prob", "family=power alpha=0.5", "family=power beta=0.5", "lambda=1 mu=1 p=0.5");
    let field = dir.path().join("w.csv");
    let o = singbif(&["supersol", "--problem", &p, "--out", field.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = singbif(&["verify", "--problem", &p, "--field", field.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("super-solution"));
}
