use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn lmshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmshift"))
        .args(args)
        .env_remove("LMSHIFT_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join(name);
    let mut args = vec!["simulate", "--n", "4000", "--seed", "3", "--out", p(&out)];
    args.extend_from_slice(extra);
    let o = lmshift(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn check_exit_codes() {
    let ok = lmshift(&["check", "fig1c"]);
    assert_eq!(code(&ok), 0);
    let v = stdout_json(&ok);
    assert_eq!(v["verdicts"].as_array().unwrap().len(), 2);
    assert!(v["manifest"]["config_hash"].as_str().unwrap().len() == 64);

    assert_eq!(code(&lmshift(&["check", "fig3a", "--target", "fate"])), 2);
    assert_eq!(code(&lmshift(&["check", "/no/such/graph.json"])), 1);
    assert_eq!(code(&lmshift(&["check", "fig1c", "--target", "ate"])), 1);
    assert_eq!(code(&lmshift(&["frobnicate"])), 1);
}

#[test]
fn malformed_graph_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.json");
    std::fs::write(&f, "{\n  \"nodes\": [,\n}").unwrap();
    let o = lmshift(&["check", p(&f)]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn simulate_masks_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a.csv", &[]);
    let b = simulate(dir.path(), "b.csv", &[]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "Y0_obs").unwrap();
    let rows: Vec<&str> = lines.collect();
    let empty = rows.iter().filter(|l| l.split(',').nth(col) == Some("")).count();
    let rate = empty as f64 / rows.len() as f64;
    assert!((0.45..0.62).contains(&rate), "missing rate {rate}");

    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 3);

    let full = simulate(dir.path(), "do.csv", &["--do", "R_Y0=1"]);
    let text = std::fs::read_to_string(full).unwrap();
    assert!(!text.lines().skip(1).any(|l| l.split(',').any(str::is_empty)));
}

#[test]
fn estimate_reports_and_rejects_unknown_estimators() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &[]);
    let o = lmshift(&["estimate", p(&data), "--estimator", "drn"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let point = v["point"].as_f64().unwrap();
    let se = v["se"].as_f64().unwrap();
    // The natural effect of this model is close to zero.
    assert!(point.abs() < 4.0 * se + 0.1, "{point} ± {se}");
    assert_eq!(v["manifest"]["command"], "estimate");

    let bad = lmshift(&["estimate", p(&data), "--estimator", "tmle"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("Usage"));
}

#[test]
fn complete_case_equals_full_effect_without_missingness() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &["--do", "R_Y0=1"]);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"drf_correction": "pseudo_residual"}"#).unwrap();
    let run = |e: &str| {
        let o = lmshift(&["estimate", p(&data), "--estimator", e, "--config", p(&cfg)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        stdout_json(&o)["point"].as_f64().unwrap()
    };
    assert!((run("cc") - run("drf")).abs() < 1e-9);
}

#[test]
fn reproduce_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig.csv");
    let start = Instant::now();
    let o = lmshift(&["reproduce-fig4", "--m", "1", "--n", "2000", "--oracle-n-mc", "200000", "--out", p(&out)]);
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(secs < 5.0, "{secs}s");
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(), 4);
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("estimator,config,mean"));
    assert!(dir.path().join("fig.csv.manifest.json").exists());
}
