use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn voltrace(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voltrace"))
        .current_dir(dir)
        .env_remove("VOLTRACE_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = voltrace(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn simulate_writes_full_path_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--sigma0", "const:1", "--n", "1000", "--seed", "7"]);
    let csv = fs::read_to_string(d.join("path.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,x");
    assert_eq!(lines.len(), 1002);
    assert_eq!(lines[1], "0,0");
    // 17 significant digits
    let x1 = lines[2].split(',').nth(1).unwrap();
    assert_eq!(x1.split('e').next().unwrap().replace(['-', '.'], "").len(), 17);
    let meta = fs::read_to_string(d.join("path.json")).unwrap();

    ok(d, &["simulate", "--sigma0", "const:1", "--n", "1000", "--seed", "7"]);
    assert_eq!(fs::read_to_string(d.join("path.csv")).unwrap(), csv);
    assert_eq!(fs::read_to_string(d.join("path.json")).unwrap(), meta);

    let path = voltrace::io::read_path(&d.join("path.csv")).unwrap();
    assert_eq!(path.n(), 1000);
}

#[test]
fn simulate_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(voltrace(d, &["simulate", "--sigma0", "const:1", "--n", "0"]).status.code(), Some(2));
    assert_eq!(voltrace(d, &["simulate", "--n", "10"]).status.code(), Some(2));
    assert_eq!(voltrace(d, &["simulate", "--sigma0", "cosine:1", "--n", "10"]).status.code(), Some(2));
    // outside the default class [0.5, 2]
    assert_eq!(voltrace(d, &["simulate", "--sigma0", "const:3", "--n", "10"]).status.code(), Some(2));
    assert_eq!(voltrace(d, &["simulate", "--sigma0", "const:3", "--n", "10", "--big-k", "4"]).status.code(), Some(0));
    assert_eq!(voltrace(d, &["bogus"]).status.code(), Some(2));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--sigma0", "affine:0.6,0.8", "--n", "50", "--seed", "11", "--out", "a.csv"]);
    let out = Command::new(env!("CARGO_BIN_EXE_voltrace"))
        .current_dir(d)
        .env("VOLTRACE_SEED", "11")
        .args(["simulate", "--sigma0", "affine:0.6,0.8", "--n", "50", "--out", "b.csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("b.csv")).unwrap());
    let bad = Command::new(env!("CARGO_BIN_EXE_voltrace"))
        .current_dir(d)
        .env("VOLTRACE_SEED", "eleven")
        .args(["simulate", "--sigma0", "const:1", "--n", "5"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_overrides_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("run.json"),
        r#"{"seed": 5, "prior": {"m": 50}, "simulate": {"sigma0": "prior-draw:3", "n": 50}}"#,
    )
    .unwrap();
    ok(d, &["--config", "run.json", "simulate", "--n", "20", "--out", "first.csv"]);
    let rows = fs::read_to_string(d.join("first.csv")).unwrap().lines().count();
    assert_eq!(rows, 22);
    let meta = json_file(&d.join("first.json"));
    assert_eq!(meta["run_config"]["simulate"]["n"], 20);
    assert_eq!(meta["seed"], 5);

    // the metadata file is itself a config
    ok(d, &["--config", "first.json", "simulate", "--out", "second.csv"]);
    assert_eq!(fs::read(d.join("first.csv")).unwrap(), fs::read(d.join("second.csv")).unwrap());
    assert_eq!(json_file(&d.join("second.json"))["config_hash"], meta["config_hash"]);

    fs::write(d.join("bad.json"), r#"{"simulate": {"nn": 3}}"#).unwrap();
    assert_eq!(voltrace(d, &["--config", "bad.json", "simulate"]).status.code(), Some(2));
    assert_eq!(voltrace(d, &["--config", "missing.json", "simulate"]).status.code(), Some(2));
}

#[test]
fn loglik_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--sigma0", "const:1", "--n", "200", "--seed", "3"]);
    let same = stdout_json(&ok(d, &["loglik", "--path", "path.csv", "--sigma", "const:1", "--sigma0", "const:1"]));
    for key in ["n", "log_l", "log_r", "s_n", "t1", "t2", "q_n"] {
        assert!(same.get(key).is_some(), "missing {key}");
    }
    assert!(same["s_n"].as_f64().unwrap().abs() < 1e-10);

    // constant dispersion: closed form over the parsed increments
    let c = 1.3f64;
    let rec = stdout_json(&ok(d, &["loglik", "--path", "path.csv", "--sigma", "const:1.3", "--sigma0", "const:1"]));
    let path = voltrace::io::read_path(&d.join("path.csv")).unwrap();
    let n = path.n() as f64;
    let v = c * c / n;
    let expect: f64 = path
        .increments()
        .map(|dx| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - dx * dx / (2.0 * v))
        .sum();
    assert!((rec["log_l"].as_f64().unwrap() - expect).abs() < 1e-9);
    let sum_sq: f64 = path.increments().map(|dx| dx * dx).sum();
    let t1 = (1.0 / (c * c)).ln() / 2.0;
    let t2 = -sum_sq * (1.0 / (c * c) - 1.0) / 2.0;
    assert!((rec["t1"].as_f64().unwrap() - t1).abs() < 1e-12);
    assert!((rec["t2"].as_f64().unwrap() - t2).abs() < 1e-12);
}

#[test]
fn loglik_reports_missing_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = voltrace(d, &["loglik", "--path", "nowhere.csv", "--sigma", "const:1", "--sigma0", "const:1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));

    fs::write(d.join("bad.csv"), "t,x\n0,0\n0.5,oops\n1,1\n").unwrap();
    let out = voltrace(d, &["loglik", "--path", "bad.csv", "--sigma", "const:1", "--sigma0", "const:1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("bad.csv"), "{err}");
}

#[test]
fn sample_prior_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["sample-prior", "--count", "5", "--m", "20", "--seed", "1", "--sigma0", "affine:0.5,0.75"]);
    let csv = fs::read_to_string(d.join("prior_draws.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config_hash: "));
    assert!(lines[1].starts_with("t_0,t_1,"));
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[2].split(',').count(), 21);
    let meta = json_file(&d.join("prior_draws.json"));
    let prior = &meta["prior"];
    for key in ["kappa", "K", "link", "driver", "beta", "m"] {
        assert!(prior.get(key).is_some(), "missing {key}");
    }
    assert_eq!(prior["driver"], "bm");
    assert!(meta["small_ball"]["estimate"]["mass"].as_f64().is_some());
    assert!(lines[0].ends_with(meta["config_hash"].as_str().unwrap()));

    ok(d, &["sample-prior", "--count", "3", "--driver", "rl", "--beta", "0.3", "--m", "20"]);
    assert_eq!(json_file(&d.join("prior_draws.json"))["prior"]["driver"], "rl");
    assert_eq!(voltrace(d, &["sample-prior", "--driver", "fbm"]).status.code(), Some(2));
}

#[test]
fn sample_posterior_chain_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--sigma0", "affine:0.5,0.75", "--n", "100", "--m", "20"]);
    let args = ["sample-posterior", "--path", "path.csv", "--m", "20", "--iters", "600", "--thin", "2", "--seed", "4"];
    ok(d, &args);
    let meta = json_file(&d.join("chain.json"));
    for key in ["acceptance_rate", "rho", "seed", "ess_diagnostics"] {
        assert!(meta.get(key).is_some(), "missing {key}");
    }
    assert_eq!(meta["ess_diagnostics"].as_array().unwrap().len(), 5);
    let csv = fs::read_to_string(d.join("chain.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 240);
    ok(d, &args);
    assert_eq!(fs::read_to_string(d.join("chain.csv")).unwrap(), csv);
    assert_eq!(voltrace(d, &["sample-posterior", "--path", "path.csv", "--rho", "2"]).status.code(), Some(2));
}

#[test]
fn ball_mass_methods() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--sigma0", "affine:0.5,0.75", "--n", "30", "--m", "20"]);
    let base = ["ball-mass", "--path", "path.csv", "--sigma0", "affine:0.5,0.75", "--m", "20", "--seed", "2"];
    let mut is_args = base.to_vec();
    is_args.extend(["--method", "is", "--is-draws", "2000"]);
    let est = stdout_json(&ok(d, &is_args));
    let mass = est["estimate"]["mass"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mass));
    assert_eq!(est["estimate"]["method"], "is");

    let mut mc_args = base.to_vec();
    mc_args.extend(["--chain-iters", "2000", "--burn-in", "500", "--level-samples", "200"]);
    let est = stdout_json(&ok(d, &mc_args));
    assert_eq!(est["estimate"]["method"], "mcmc");

    let mut bad = base.to_vec();
    bad.extend(["--method", "gibbs"]);
    assert_eq!(voltrace(d, &bad).status.code(), Some(2));
}

#[test]
fn ball_mass_flags_weight_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // many observations: prior proposals cannot track the likelihood
    ok(d, &["simulate", "--sigma0", "affine:0.5,0.75", "--n", "5000", "--m", "20"]);
    let out = voltrace(
        d,
        &["ball-mass", "--path", "path.csv", "--sigma0", "affine:0.5,0.75", "--m", "20", "--method", "is", "--is-draws", "1000"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["estimate"]["degenerate"], true);
}

#[test]
fn sweep_dry_run_prints_plan_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(d, &["sweep", "--dry-run", "--n-grid", "50,200", "--replications", "3", "--out-dir", "res"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config_hash: "));
    assert_eq!(lines[1], "n,rep,method,path_seed,estimator_seed");
    assert_eq!(lines.len(), 2 + 6);
    assert!(lines[2].starts_with("50,0,is,"));
    assert!(lines[7].starts_with("200,2,mcmc,"));
    assert!(!d.join("res").exists());
}

#[test]
fn small_sweep_outputs_are_tagged_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "sweep", "--n-grid", "20,60", "--replications", "3", "--m", "20", "--is-draws", "1000",
        "--chain-iters", "1000", "--burn-in", "300", "--level-samples", "100", "--lemma-draws", "2",
        "--is-crossover", "20", "--seed", "9", "--out-dir", "res",
    ];
    let summary = stdout_json(&ok(d, &args));
    let hash = summary["config_hash"].as_str().unwrap().to_string();
    let res = d.join("res");
    let files = ["sweep.json", "sweep.csv", "sweep.svg"];
    let first: Vec<String> = files.iter().map(|f| fs::read_to_string(res.join(f)).unwrap()).collect();
    for (f, text) in files.iter().zip(&first) {
        assert!(text.contains(&hash), "{f} lacks the config hash");
    }
    assert!(first[2].starts_with("<svg"));
    assert!(first[2].contains("<polyline"));
    let report = json_file(&res.join("sweep.json"));
    assert_eq!(report["report"]["cells"].as_array().unwrap().len(), 6);
    assert_eq!(report["report"]["sizes"].as_array().unwrap().len(), 2);

    ok(d, &args);
    for (f, text) in files.iter().zip(&first) {
        assert_eq!(&fs::read_to_string(res.join(f)).unwrap(), text, "{f} changed between runs");
    }
}

#[test]
fn verify_lemmas_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(
        d,
        &["verify-lemmas", "--n-grid", "100,400", "--draws", "20", "--replications", "10", "--m", "50", "--compact"],
    );
    let summary = stdout_json(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim().lines().count(), 1);
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["rows"].as_array().unwrap().len(), 2);
    assert!(d.join("lemmas.json").exists());
}
