use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spde_lab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spde-lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPDE_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const LINEAR: &str = r#"{
  "model": {"kind": "linear", "dim": 32, "drift_scale": 0.5, "noise_rank": "auto",
            "sigma": {"power": {"scale": 0.5, "alpha": 0.0, "rank": 8}}},
  "grid": {"t_end": 1.0, "steps": 500, "checkpoints": [0.25, 0.5, 1.0]},
  "mc": {"paths": 200, "master_seed": 3},
  "suite": {"reflection_paths": 5, "probes": 10, "assumption_samples": 200}
}"#;

#[test]
fn constants_are_deterministic_and_zero_constants_give_min_n_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &LINEAR.replace("\"drift_scale\": 0.5", "\"drift_scale\": 0.0"));
    let a = spde_lab(&["constants", "--config", &cfg, "--out", "a"], dir.path());
    let b = spde_lab(&["constants", "--config", &cfg, "--out", "b"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    let ja = fs::read(dir.path().join("a/report.json")).unwrap();
    let jb = fs::read(dir.path().join("b/report.json")).unwrap();
    assert_eq!(ja, jb);
    let v: serde_json::Value = serde_json::from_slice(&ja).unwrap();
    assert_eq!(v["min_n"], 1);
    assert_eq!(v["r_by_n"][0]["r"], 2.0);
    assert!(String::from_utf8_lossy(&a.stdout).contains("min_N = 1"));
}

#[test]
fn ns_below_theta_threshold_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ns.json",
        r#"{
          "model": {"kind": "navier_stokes", "d": 3, "cutoff": 2, "nu": 1.0, "theta": 1.0, "noise_rank": 2,
                    "sigma": {"power": {"scale": 1.0, "alpha": 0.0, "rank": 4}}},
          "grid": {"t_end": 1.0, "steps": 10}
        }"#,
    );
    let o = spde_lab(&["constants", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("theta below 1∨(d+2)/4"));
}

const NS: &str = r#"{
  "model": {"kind": "navier_stokes", "d": 2, "cutoff": 4, "nu": 1.0, "theta": 1.0, "noise_rank": "auto",
            "sigma": {"power": {"scale": 0.05, "alpha": 0.0, "rank": 4}}, "k_bilinear_samples": 4},
  "grid": {"t_end": 1.0, "steps": 10},
  "suite": {"assumption_samples": 200}
}"#;

#[test]
fn ns_constants_with_weak_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ns.json", NS);
    let o = spde_lab(&["constants", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(v["model"]["dim"], 48);
    assert_eq!(v["min_n"], 1);
    assert_eq!(v["constants"]["k_bilinear_source"], "empirical lower bound");
    assert_eq!(v["assumptions"]["pass"], true);
}

#[test]
fn ns_constants_with_full_noise_violate_r_positivity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ns.json", &NS.replace("\"scale\": 0.05, \"alpha\": 0.0, \"rank\": 4", "\"scale\": 1.0, \"alpha\": 0.0, \"rank\": 47"));
    let o = spde_lab(&["constants", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert!(v["min_n"].is_null());
    assert_eq!(v["r_by_n"].as_array().unwrap().len(), 47);
    assert!(v["hypotheses"][0].as_str().unwrap().contains("r(N) > 0"));
}

#[test]
fn couple_with_equal_starts_writes_zero_distances() {
    let dir = tempfile::tempdir().unwrap();
    let text = LINEAR.replace(
        "\"suite\": {",
        "\"suite\": {\"x0\": {\"mode\": {\"index\": 2, \"amplitude\": 0.4}}, \"y0\": {\"mode\": {\"index\": 2, \"amplitude\": 0.4}}, ",
    );
    let cfg = write(dir.path(), "c.json", &text);
    let o = spde_lab(&["couple", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("o/couple_t1.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# spde-lab-csv/1"));
    assert_eq!(lines.next().unwrap(), "t,dist_h,beta_sq_integral,beta_dw_integral,girsanov_weight");
    let mut n = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "0");
        assert_eq!(cols[4], "1");
        n += 1;
    }
    assert_eq!(n, 501);
}

#[test]
fn simulate_writes_path_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", LINEAR);
    let o = spde_lab(&["simulate", "--config", &cfg, "--out", "o", "--seed", "11"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(v["master_seed"], 11);
    assert!(v["sup_h_norm"].as_f64().unwrap() <= 1.0 + 1e-12);
    assert_eq!(fs::read_to_string(dir.path().join("o/simulate_t1.csv")).unwrap().lines().count(), 503);
}

#[test]
fn invalid_config_reports_all_problems() {
    let dir = tempfile::tempdir().unwrap();
    let text = LINEAR
        .replace("\"steps\": 500", "\"steps\": 0")
        .replace("\"paths\": 200", "\"paths\": 0")
        .replace("\"suite\": {", "\"suite\": {\"beta_factor\": 0.7, ");
    let cfg = write(dir.path(), "c.json", &text);
    let o = spde_lab(&["verify", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["grid.steps", "mc.paths", "beta_factor"] {
        assert!(err.contains(needle), "{err}");
    }
    assert!(!dir.path().join("o").exists());
    let missing = spde_lab(&["verify"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn verify_passes_on_desk_model_and_detects_wrong_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", LINEAR);
    let o = spde_lab(&["verify", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    for f in ["report.json", "contraction_t1.csv", "moment_t1_t1.csv", "moment_t2_t1.csv", "girsanov_t1.csv", "harnack_f0_t1.csv", "gradient_t1.csv"] {
        assert!(dir.path().join("o").join(f).exists(), "{f}");
    }

    // claiming K_b = 0 and |sigma(0)| = 0 shrinks the T1 bound below the truth
    let wrong = LINEAR
        .replace("\"noise_rank\": \"auto\",", "\"noise_rank\": 1, \"constants\": {\"K_b\": 0.0, \"sigma0_hs\": 0.0},")
        .replace("\"t_end\": 1.0, \"steps\": 500, \"checkpoints\": [0.25, 0.5, 1.0]", "\"t_end\": 4.0, \"steps\": 2000, \"checkpoints\": [2.0, 4.0]")
        .replace("\"suite\": {", "\"suite\": {\"enabled\": [\"moment_t1\", \"assumptions\"], ");
    let cfg = write(dir.path(), "w.json", &wrong);
    let o = spde_lab(&["verify", "--config", &cfg, "--out", "w"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("moment_t1: FAIL") && out.contains("assumptions: FAIL"), "{out}");
}

#[test]
fn sweep_over_noise_rank_improves_decay_rate() {
    let dir = tempfile::tempdir().unwrap();
    let text = LINEAR
        .replace("\"paths\": 200", "\"paths\": 100")
        .replace("\"suite\": {", "\"sweep\": {\"noise_rank\": [1, 2, 4, 8]}, \"suite\": {\"enabled\": [\"contraction\"], ");
    let cfg = write(dir.path(), "s.json", &text);
    let o = spde_lab(&["sweep", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(v["monotone_rate_improvement"], true);
    let rates: Vec<f64> = v["cells"].as_array().unwrap().iter().map(|c| c["fitted_rate"].as_f64().unwrap()).collect();
    assert_eq!(rates.len(), 4);
    assert!(rates.windows(2).all(|w| w[1] < w[0]), "{rates:?}");
    assert_eq!(fs::read_to_string(dir.path().join("o/sweep.csv")).unwrap().lines().count(), 6);
}

#[test]
fn thread_count_and_env_fallback_do_not_change_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = LINEAR
        .replace("\"paths\": 200", "\"paths\": 64")
        .replace("\"suite\": {", "\"suite\": {\"enabled\": [\"contraction\", \"girsanov\", \"harnack\"], ");
    let cfg = write(dir.path(), "c.json", &text);
    let a = spde_lab(&["verify", "--config", &cfg, "--out", "a", "--threads", "1"], dir.path());
    let b = Command::new(env!("CARGO_BIN_EXE_spde-lab"))
        .args(["verify", "--config", &cfg, "--out", "b"])
        .env("SPDE_LAB_THREADS", "3")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(a.status.code(), b.status.code());
    assert_eq!(
        fs::read(dir.path().join("a/report.json")).unwrap(),
        fs::read(dir.path().join("b/report.json")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("a/harnack_f0_t1.csv")).unwrap(),
        fs::read(dir.path().join("b/harnack_f0_t1.csv")).unwrap()
    );
}
