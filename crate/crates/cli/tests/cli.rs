use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn nlinv(args: &[&str]) -> (i32, Value, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_nlinv")).args(args).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    let json = serde_json::from_str(&stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), json, String::from_utf8_lossy(&out.stderr).to_string())
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn check_preset_passes_and_larger_horizon_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.json", r#"{"preset": "single-odd"}"#);
    let (code, report, _) = nlinv(&["check", "--config", s(&cfg), "--max-T"]);
    assert_eq!(code, 0);
    assert_eq!(report["constants"]["eq33_holds"], true);
    assert_eq!(report["compliance"]["all_hold"], true);
    let t = report["T"].as_f64().unwrap();
    let max_t = report["max_T"].as_f64().unwrap();
    assert!((max_t - t).abs() <= 1e-4 * t);
    for key in ["rho", "rho1", "rho2", "A", "B", "R", "eq33_lhs", "thm1_smallness_lhs", "thm3_lhs", "thm3_holds", "data_norms"] {
        assert!(!report["constants"][key].is_null(), "missing {key}");
    }

    let mut horizon = t;
    loop {
        horizon *= 2.0;
        let cfg = write_config(dir.path(), "q.json", &format!(r#"{{"preset": "single-odd", "T": {horizon}}}"#));
        let (code, report, _) = nlinv(&["check", "--config", s(&cfg)]);
        if code == 2 {
            assert!(report["constants"]["eq33_lhs"].as_f64().unwrap() >= 1.0);
            break;
        }
        assert_eq!(code, 0);
        assert!(horizon < 1.0);
    }
}

#[test]
fn invalid_inputs_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.json",
        r#"{"beta": 1, "delta1": 0, "delta2": 0, "T": 0.1,
            "functions": {"f": "0", "phi": "0", "psi": "0", "h": "1"}}"#,
    );
    let (code, _, err) = nlinv(&["check", "--config", s(&cfg)]);
    assert_eq!(code, 4);
    assert!(err.contains("beta"), "{err}");

    for body in [
        r#"{"preset": "single-odd", "unknown": 1}"#,
        r#"{"beta": 3, "delta1": 0, "delta2": 0, "T": 0.1}"#,
        r#"{"preset": "single-odd", "beta": 3}"#,
        r#"{"preset": "nope"}"#,
        r#"{"beta": 3, "delta1": 0, "delta2": 0, "T": 0.1,
            "functions": {"f": "2**x", "phi": "0", "psi": "0", "h": "1"}}"#,
        r#"not json"#,
    ] {
        let cfg = write_config(dir.path(), "bad.json", body);
        let (code, _, _) = nlinv(&["check", "--config", s(&cfg)]);
        assert_eq!(code, 4, "{body}");
    }
    assert_eq!(nlinv(&["no-such-command"]).0, 4);
    assert_eq!(nlinv(&["check", "--config", "/nonexistent.json"]).0, 4);
}

#[test]
fn solve_inverse_preset_recovers_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.json", r#"{"preset": "single-odd"}"#);
    let out = dir.path().join("run");
    let (code, report, _) = nlinv(&["solve-inverse", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code, 0);
    assert!(report["max_abs_err"].as_f64().unwrap() <= 5e-3);
    let rows = read_csv(&out.join("a.csv"));
    assert_eq!(rows.len(), 257);
    assert!(rows.iter().all(|r| r.len() == 4 && r[3] <= 5e-3));
    let header = std::fs::read_to_string(out.join("a.csv")).unwrap();
    assert!(header.starts_with("t,a,a_true,abs_err\n"));
    let u = std::fs::read_to_string(out.join("u.csv")).unwrap();
    assert!(u.starts_with("x,t,u\n") && !u.contains('\r'));
    assert_eq!(u.lines().count(), 1 + 513 * 257);
    let full: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(full["constants"]["eq33_holds"].as_bool().unwrap());
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.json", r#"{"preset": "odd-even", "T": 0.1, "K": 4, "nt": 65, "nx": 129}"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(nlinv(&["solve-inverse", "--config", s(&cfg), "--out", s(&a)]).0, 0);
    assert_eq!(nlinv(&["solve-inverse", "--config", s(&cfg), "--out", s(&b), "--threads", "1"]).0, 0);
    for f in ["a.csv", "u.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn iteration_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.json", r#"{"preset": "odd-even", "T": 0.15, "K": 4, "nt": 65, "nx": 129}"#);
    let (code, report, _) = nlinv(&["solve-inverse", "--config", s(&cfg), "--max-iter", "1"]);
    assert_eq!(code, 3);
    assert_eq!(report["converged"], false);
}

#[test]
fn force_runs_despite_violated_compatibility() {
    let dir = tempfile::tempdir().unwrap();
    // phi = X_1 + 0.1 has nonzero mean
    let body = r#"{"beta": 3, "delta1": 0, "delta2": 0, "T": 0.1, "K": 4, "nt": 65, "nx": 129,
        "functions": {"f": "(4*pi^2)*((-0.5*x+0.75)*cos(2*pi*x)) + 2*(-0.5)*2*pi*sin(2*pi*x)",
                      "phi": "(-0.5*x+0.75)*cos(2*pi*x) + 0.1",
                      "psi": "0", "h": "-0.5"}}"#;
    let cfg = write_config(dir.path(), "c.json", body);
    let (code, report, _) = nlinv(&["solve-inverse", "--config", s(&cfg)]);
    assert_eq!(code, 2);
    assert!(report["failed"].as_array().unwrap().iter().any(|v| v.as_str().unwrap().contains("phi")));

    let (code, report, err) = nlinv(&["solve-inverse", "--config", s(&cfg), "--force"]);
    assert!(code == 0 || code == 3, "{err}");
    assert!(err.contains("violated"), "{err}");
    assert!(report["warnings"].as_array().unwrap().iter().any(|w| w.as_str().unwrap().contains("violated")));
    // u(x,0) can no longer match phi: the mean of phi has no basis component
    assert!(report["residuals"]["initial_value"].as_f64().unwrap() > 1e-2);
}

#[test]
fn forward_single_mode_field() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"beta": 3, "delta1": 0, "delta2": 0, "T": 0.5, "K": 2, "nt": 513, "nx": 65,
        "functions": {"f": "0", "phi": "sin(2*pi*x)", "psi": "0", "h": "0", "a": "0"}}"#;
    let cfg = write_config(dir.path(), "fwd.json", body);
    let out = dir.path().join("fwd");
    let (code, report, err) = nlinv(&["solve-forward", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(report["iterations"], 1);
    let rows = read_csv(&out.join("u.csv"));
    let worst = rows
        .iter()
        .map(|r| (r[2] - (2.0 * std::f64::consts::PI * r[1]).cos() * (2.0 * std::f64::consts::PI * r[0]).sin()).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "{worst}");

    let cfg = write_config(dir.path(), "noa.json", &body.replace(r#", "a": "0""#, ""));
    assert_eq!(nlinv(&["solve-forward", "--config", s(&cfg)]).0, 4);
}

#[test]
fn manufactured_files_pass_check_and_residual() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    assert_eq!(nlinv(&["manufacture", "single-odd", "--out", s(&out)]).0, 0);
    let (code, report, _) = nlinv(&["check", "--config", s(&out.join("problem.json"))]);
    assert_eq!(code, 0, "{report}");

    // the u_tt stencil needs a horizon where finite differences resolve it
    let out = dir.path().join("m2");
    assert_eq!(nlinv(&["manufacture", "three-mode", "--out", s(&out), "--T", "0.2"]).0, 0);
    let (code, r, err) = nlinv(&[
        "residual",
        "--config",
        s(&out.join("problem.json")),
        "--a",
        s(&out.join("truth_a.csv")),
        "--u",
        s(&out.join("truth_u.csv")),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(r["max_residual"].as_f64().unwrap() <= 1e-4, "{r}");
    assert!(r["projection_error"].as_f64().unwrap() <= 1e-10, "{r}");
    assert_eq!(nlinv(&["manufacture", "nope", "--out", s(&out)]).0, 4);
}

#[test]
fn sampled_data_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    assert_eq!(nlinv(&["manufacture", "single-odd", "--out", s(&out), "--T", "0.1"]).0, 0);
    // h(t) = -(1 + 0.1 sin t) / 2 as samples
    let mut text = String::from("t,value\n");
    for j in 0..=256 {
        let t = 0.1 * j as f64 / 256.0;
        text.push_str(&format!("{t:?},{:?}\n", -0.5 * (1.0 + 0.1 * t.sin())));
    }
    std::fs::write(dir.path().join("h.csv"), text).unwrap();
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(out.join("problem.json")).unwrap()).unwrap();
    let mut cfg = cfg;
    cfg["functions"]["h"] = serde_json::json!({"file": "h.csv"});
    cfg["K"] = 8.into();
    cfg["nt"] = 129.into();
    let path = write_config(dir.path(), "sampled.json", &cfg.to_string());
    let (code, report, err) = nlinv(&["solve-inverse", "--config", s(&path)]);
    assert_eq!(code, 0, "{err}");
    assert!(report["max_abs_err"].as_f64().unwrap() < 1e-3, "{report}");
}
