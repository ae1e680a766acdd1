use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cms-cutoff"))
}

fn code(cmd: &mut Command) -> i32 {
    let out = cmd.output().expect("binary runs");
    out.status.code().expect("exit code")
}

/// Two clamped beams joined tip to tip by a spring.
fn two_beams(methods: &[&str], gamma: f64) -> Value {
    let beam = json!({
        "kind": "fe",
        "mesh": {"shape": "rectangle", "width": 0.5, "height": 0.05, "nx": 10, "ny": 1, "order": 1},
        "material": {"youngs_modulus": 210e9, "poisson_ratio": 0.3, "density": 7800.0, "thickness": 0.01},
        "fixed": [[-1e-6, -1.0, 1e-6, 1.0]]
    });
    let tip = |c: usize| json!({"component": c, "selector": {"kind": "uy", "at": [0.5, 0.05]}});
    json!({
        "components": [
            {"id": "a", "source": beam, "damping_ratio": 0.01},
            {"id": "b", "source": beam, "damping_ratio": 0.01}
        ],
        "interconnection": {
            "springs": [{"a": tip(0), "b": tip(1), "stiffness": 1e5}],
            "inputs": [tip(0)],
            "outputs": [tip(1)]
        },
        "grid": {"f_min_hz": 5.0, "f_max_hz": 200.0, "n_points": 12, "spacing": "log"},
        "gamma": gamma,
        "methods": methods,
        "output_dir": "out",
        "seed": 3
    })
}

fn write_config(dir: &Path, cfg: &Value) -> std::path::PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(code(bin().arg("run").arg("--config").arg(&missing)), 2);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_beams(&["proposed"], 0.05);
    cfg["surprise"] = json!(1);
    let path = write_config(dir.path(), &cfg);
    assert_eq!(code(bin().arg("synthesize").arg("--config").arg(&path)), 2);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn reduce_without_budgets_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &two_beams(&["proposed"], 0.05));
    assert_eq!(code(bin().arg("reduce").arg("--config").arg(&path)), 2);
}

#[test]
fn staged_proposed_plan_checks_clean() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &two_beams(&["proposed"], 0.05));
    let out = dir.path().join("out");
    assert_eq!(code(bin().arg("synthesize").arg("--config").arg(&path)), 0);
    assert!(out.join("budgets.csv").exists());
    assert!(out.join("sensitivity.csv").exists());
    assert_eq!(code(bin().arg("reduce").arg("--config").arg(&path)), 0);
    assert!(out.join("roms/proposed/a.json").exists());
    assert_eq!(code(bin().arg("check").arg("--config").arg(&path).arg("--threads").arg("1")), 0);
    for f in ["summary.csv", "frf.csv", "relerr.csv", "report.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let text = fs::read_to_string(out.join("budgets.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.starts_with("f_hz,component,channel,"));
}

#[test]
fn under_reduced_plan_fails_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &two_beams(&["standard-1"], 1e-6));
    assert_eq!(code(bin().arg("reduce").arg("--config").arg(&path)), 0);
    assert_eq!(code(bin().arg("check").arg("--config").arg(&path)), 4);
}

#[test]
fn out_flag_overrides_config_directory() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &two_beams(&["standard-2"], 0.05));
    let other = dir.path().join("elsewhere");
    assert_eq!(code(bin().arg("run").arg("--config").arg(&path).arg("--out").arg(&other)), 0);
    assert!(other.join("summary.csv").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn demo_uniform_one_times_fmax_fails_check() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = cms_cutoff::demo::demo_config();
    cfg.methods = vec![cms_cutoff::config::Method::Standard(1)];
    cfg.output_dir = Some("out".into());
    let path = dir.path().join("demo.json");
    fs::write(&path, cfg.to_json()).unwrap();
    assert_eq!(code(bin().arg("reduce").arg("--config").arg(&path)), 0);
    assert!(dir.path().join("out/roms/standard-1/z-stage.json").exists());
    assert_eq!(code(bin().arg("check").arg("--config").arg(&path)), 4);
    let report = fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert!(report.contains("no uniform plan satisfies the requirement"));
}
