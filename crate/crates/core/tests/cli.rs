//! End-to-end tests of the command-line interface: artifact emission, exit
//! codes, and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sonic-patch")
}

fn repo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.cfg")
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sonic-patch-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_cfg(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = "p1 = -2\np4 = -1\nn_plus = 16\nn_minus = 16\n";

#[test]
fn all_emits_five_artifacts_and_manifest() {
    let dir = scratch("all");
    let cfg = write_cfg(&dir, SMALL);
    let out = Command::new(bin())
        .args(["all", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "mesh.csv",
        "field.csv",
        "diagnostics.json",
        "residuals.json",
        "residuals.csv",
        "manifest.txt",
        "timestamp.txt",
    ] {
        assert!(dir.join("out").join(name).exists(), "missing {name}");
    }
    // CSV artifacts have header rows
    let mesh = fs::read_to_string(dir.join("out/mesh.csv")).unwrap();
    assert!(mesh.starts_with("i,j,theta,r,xi,eta,p,R,S,t"));
    let field = fs::read_to_string(dir.join("out/field.csv")).unwrap();
    assert!(field.starts_with("r,t,p,R,S,V_over_t,Rr,Sr"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn shipped_reference_config_runs_diagnose_strict_clean() {
    let dir = scratch("ref");
    let out = Command::new(bin())
        .args(["diagnose", "--strict", "--config"])
        .arg(repo_config())
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("out/diagnostics.json").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn identical_configs_give_identical_artifact_bytes() {
    let dir = scratch("repro");
    let cfg = write_cfg(&dir, SMALL);
    for sub in ["a", "b"] {
        let out = Command::new(bin())
            .args(["all", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(sub))
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    for name in [
        "mesh.csv",
        "field.csv",
        "diagnostics.json",
        "residuals.json",
        "residuals.csv",
        "manifest.txt",
    ] {
        let a = fs::read(dir.join("a").join(name)).unwrap();
        let b = fs::read(dir.join("b").join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between identical runs");
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn malformed_config_exits_2_with_line_and_key() {
    let dir = scratch("badcfg");
    let cfg = write_cfg(&dir, "p1 = -2\nbogus_key = 7\n");
    let out = Command::new(bin())
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
    assert!(stderr.contains("bogus_key"), "stderr: {stderr}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_config_flag_exits_2() {
    let out = Command::new(bin()).arg("solve").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_3() {
    // an r-window too narrow for the grid spacing cannot seed the march
    let dir = scratch("solverfail");
    let cfg = write_cfg(
        &dir,
        "p1 = -2\np4 = -1\nn_plus = 16\nn_minus = 16\nr_window_lo = 0.49\nr_window_hi = 0.5\n",
    );
    let out = Command::new(bin())
        .args(["march", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn degenerate_profile_violates_strict_diagnose_with_exit_4() {
    // s0 = 0 prescribes the wave's own data: dp_minus stays identically zero
    // and the v/t monitor is undefined, which strict mode must flag
    let dir = scratch("strict4");
    let cfg = write_cfg(&dir, "p1 = -2\np4 = -1\nn_plus = 16\nn_minus = 16\ns0 = 0\n");
    let out = Command::new(bin())
        .args(["diagnose", "--strict", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(4),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("strict violation"), "stderr: {stderr}");
    // without --strict the same run reports and exits 0
    let out = Command::new(bin())
        .args(["diagnose", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn trace_emits_wave_curves() {
    let dir = scratch("trace");
    let cfg = write_cfg(&dir, SMALL);
    let out = Command::new(bin())
        .args(["trace", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let ab = fs::read_to_string(dir.join("out/trace_ab.csv")).unwrap();
    assert!(ab.starts_with("xi,eta,r,theta,p,R,S"));
    assert!(ab.lines().count() > 1000);
    assert!(dir.join("out/trace_minus_b.csv").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn refine_flag_scales_the_mesh() {
    let dir = scratch("refine");
    let cfg = write_cfg(&dir, SMALL);
    for (tag, refine) in [("r1", "1"), ("r2", "2")] {
        let out = Command::new(bin())
            .args(["solve", "--refine", refine, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(tag))
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let lines = |p: PathBuf| fs::read_to_string(p).unwrap().lines().count();
    let coarse = lines(dir.join("r1/mesh.csv"));
    let fine = lines(dir.join("r2/mesh.csv"));
    assert!(
        fine > 3 * coarse,
        "refined mesh should have ~4x the nodes: {coarse} vs {fine}"
    );
    fs::remove_dir_all(&dir).unwrap();
}
