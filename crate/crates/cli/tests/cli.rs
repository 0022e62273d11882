use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mframe"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn geometric_scalar() -> Value {
    json!({
        "version": 1,
        "problem": {
            "coefficients": { "family": "geometric", "mu": 0.5, "sigma": 0.8 },
            "y0": [1.0]
        },
        "noise": {
            "wiener": { "eigenvalues": [1.0] },
            "marks": {
                "mark_dim": 1,
                "intensity_small": 4.0,
                "intensity_large": 1.0,
                "sampler_small": { "family": "uniform-box", "lower": [-0.05], "upper": [0.15] },
                "sampler_large": { "family": "uniform-box", "lower": [0.2], "upper": [0.6] }
            },
            "horizon": 1.0,
            "dt": 0.0078125
        },
        "run": { "seed_count": 400 }
    })
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = shipped("default.json");
    for out in ["a", "b"] {
        let dir = tmp.path().join(out);
        let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed-count", "3", "--out", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for seed in 0..3 {
        let name = format!("trajectory_seed{seed}.csv");
        let a = std::fs::read(tmp.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn manifest_lists_every_file_with_its_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&[
        "simulate",
        "--config",
        shipped("shift.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    let mut listed: Vec<String> = files.iter().map(|f| f["path"].as_str().unwrap().to_string()).collect();
    listed.sort();
    let mut on_disk: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    assert_eq!(listed.len(), 4);
    for f in files {
        let bytes = std::fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), mframe::experiment::sha256_hex(&bytes));
    }
    assert_eq!(manifest["lifetimes"].as_array().unwrap().len(), 2);
}

#[test]
fn zero_coefficients_follow_the_semigroup() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "version": 1,
        "problem": {
            "semigroup": { "kind": "diagonal", "eigenvalues": [-1.0, -0.5] },
            "coefficients": { "family": "linear" },
            "y0": [2.0, 1.0]
        },
        "noise": { "wiener": { "eigenvalues": [1.0] }, "horizon": 1.0, "dt": 0.25 },
        "run": { "regime": "mild-frame" }
    });
    let path = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let o = run(&["simulate", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("trajectory_seed0.csv")).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').take(3).map(|c| c.parse().unwrap()).collect();
        let t = cols[0];
        assert!((cols[1] - 2.0 * (-t).exp()).abs() < 1e-14);
        assert!((cols[2] - (-0.5 * t).exp()).abs() < 1e-14);
    }
}

#[test]
fn invalid_dt_is_a_validation_error_naming_dt() {
    let o = run(&["simulate", "--config", shipped("default.json").to_str().unwrap(), "--dt", "0.3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`dt`"));
}

#[test]
fn shift_step_must_be_a_multiple_of_the_spacing() {
    let o = run(&["verify", "--config", shipped("shift.json").to_str().unwrap(), "--dt", "0.005"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`dt`"));
}

#[test]
fn unknown_config_fields_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = geometric_scalar();
    cfg["noise"]["horizn"] = json!(1.0);
    let path = write_config(tmp.path(), &cfg);
    let o = run(&["verify", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizn"));
}

#[test]
fn shipped_configs_pass_every_suite() {
    for name in ["default.json", "shift.json"] {
        let o = run(&["verify", "--config", shipped(name).to_str().unwrap(), "--suite", "all"]);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let report: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(report["pass"], json!(true));
        assert_eq!(report["suites"].as_array().unwrap().len(), 5);
    }
}

#[test]
fn uniqueness_suite_reports_the_sup_distance() {
    let o = run(&["verify", "--config", shipped("default.json").to_str().unwrap(), "--suite", "uniqueness"]);
    assert!(o.status.success());
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let check = report["suites"][0]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["invariant"] == "pathwise-uniqueness")
        .unwrap()
        .clone();
    assert!(check["measured"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn corrupted_projection_fails_the_dilation_check() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(shipped("default.json")).unwrap()).unwrap();
    cfg["verify"] = json!({ "faults": { "projection_scale": 2.0 } });
    let path = write_config(tmp.path(), &cfg);
    let o = run(&["dilation-check", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let check = &report["suites"][0]["checks"][0];
    assert_eq!(check["pass"], json!(false));
    // 2 pi U_t h - S_t h = S_t h, largest for t = 0 and the unit probes
    let measured = check["measured"].as_f64().unwrap();
    let probe_norm = ((1..=2).map(|i| (i as f64).sin().powi(2)).sum::<f64>()).sqrt();
    assert!((measured - probe_norm.max(1.0)).abs() < 1e-12, "{measured}");
}

#[test]
fn conditions_check_runs_standalone() {
    let o = run(&["conditions-check", "--config", shipped("default.json").to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn doleans_dade_convergence_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &geometric_scalar());
    let out = tmp.path().join("conv");
    let o = run(&[
        "converge",
        "--config",
        path.to_str().unwrap(),
        "--ladder",
        "0.0625,0.03125,0.015625,0.0078125",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table: Value = serde_json::from_slice(&std::fs::read(out.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(table["oracle"]["kind"], json!("doleans-dade"));
    let slope = table["slope"].as_f64().unwrap();
    assert!((0.3..=0.7).contains(&slope), "{slope}");
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("dt,error,std_error,paths\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn noiseless_linear_ode_converges_at_first_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "version": 1,
        "problem": {
            "coefficients": { "family": "linear", "drift_matrix": [[-1.0, 0.5], [0.0, -2.0]] },
            "y0": [1.0, 1.0]
        },
        "noise": { "wiener": { "eigenvalues": [1.0] }, "horizon": 1.0, "dt": 0.0625 }
    });
    let path = write_config(tmp.path(), &cfg);
    let o = run(&["converge", "--config", path.to_str().unwrap(), "--ladder", "0.0625,0.03125,0.015625,0.0078125"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("LinearOde"));
    let slope: f64 = stdout.lines().find_map(|l| l.strip_prefix("slope: ")).unwrap().parse().unwrap();
    assert!((slope - 1.0).abs() < 0.1, "{slope}");
}

#[test]
fn single_rung_ladder_reports_no_slope() {
    let o = run(&["converge", "--config", shipped("default.json").to_str().unwrap(), "--ladder", "0.0625"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("slope: not-available"));
}

#[test]
fn numerical_failure_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "version": 1,
        "problem": { "coefficients": { "family": "cubic" }, "y0": [1.0] },
        "noise": { "wiener": { "eigenvalues": [1.0] }, "horizon": 1.0, "dt": 0.001 },
        "run": { "regime": "interlace", "opts": { "blowup_threshold": 1e6 } }
    });
    let path = write_config(tmp.path(), &cfg);
    let o = run(&["simulate", "--config", path.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn thread_cap_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = shipped("default.json");
    for (dir, threads) in [("one", "1"), ("two", "2")] {
        let o = bin()
            .env("MF_THREADS", threads)
            .args(["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join(dir).to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    for seed in 0..4 {
        let name = format!("trajectory_seed{seed}.csv");
        assert_eq!(
            std::fs::read(tmp.path().join("one").join(&name)).unwrap(),
            std::fs::read(tmp.path().join("two").join(&name)).unwrap()
        );
    }
    let o = bin()
        .env("MF_THREADS", "zero")
        .args(["verify", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
