use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use softarm::kinematics::{arc_transform, ArcParams};
use tempfile::TempDir;

fn bundled(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn arm(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arm"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn arm")
}

fn ok_json(o: &Output) -> Value {
    assert!(
        o.status.success(),
        "exit {:?}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_CONFIG: &str = r#"{
  "materials": {
    "soft": {"bending_stiffness_nmm2": 2000, "axial_stiffness_n": 40, "linear_density_g_per_mm": 0.1}
  },
  "segments": [
    {"material": "soft", "length_mm": 100},
    {"material": "soft", "length_mm": 100}
  ],
  "sweep": {"theta_max_rad": 1.0}
}"#;

fn small_config(dir: &TempDir) -> PathBuf {
    let p = dir.path().join("arm.json");
    fs::write(&p, SMALL_CONFIG).unwrap();
    p
}

#[test]
fn simulate_heavy_payload_on_softest_material() {
    let tmp = TempDir::new().unwrap();
    let o = arm(
        &bundled("arm.json"),
        tmp.path(),
        &["simulate", "--pull", "s1:45", "--payload", "200", "--material", "ecoflex-0010", "--segments", "1", "--length", "120"],
    );
    let v = ok_json(&o);
    let angle = v["ccfit_angle_deg"].as_f64().unwrap();
    assert!((angle - 91.0).abs() < 0.05 * 91.0, "angle {angle}");
    assert!(tmp.path().join("equilibrium.json").exists());
    let shape = fs::read_to_string(tmp.path().join("shape.csv")).unwrap();
    assert!(shape.starts_with("node,x_mm,y_mm,z_mm\n"));
    assert_eq!(shape.lines().count(), 1 + 21);
}

#[test]
fn simulate_idle_without_gravity_is_straight_and_slack() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(&tmp);
    let o = arm(&cfg, tmp.path(), &["simulate", "--pull", "s1:0", "--payload", "0", "--no-gravity"]);
    let v = ok_json(&o);
    assert!(v["ccfit_angle_deg"].as_f64().unwrap().abs() < 1e-9);
    for seg in v["tendon_tensions_n"].as_array().unwrap() {
        for t in seg.as_array().unwrap() {
            assert_eq!(t.as_f64().unwrap(), 0.0);
        }
    }
}

#[test]
fn simulate_unknown_material_names_it() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(&tmp);
    let o = arm(&cfg, tmp.path(), &["simulate", "--pull", "s1:10", "--material", "unobtainium"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unobtainium"), "{}", stderr(&o));
}

#[test]
fn usage_and_config_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(&tmp);
    assert_eq!(arm(&cfg, tmp.path(), &["fly"]).status.code(), Some(1));
    assert_eq!(arm(&cfg, tmp.path(), &["simulate", "--pull", "s9:10"]).status.code(), Some(1));
    assert_eq!(arm(&cfg, tmp.path(), &["simulate", "--pull", "s1:500"]).status.code(), Some(1));
    assert_eq!(
        arm(&tmp.path().join("missing.json"), tmp.path(), &["simulate"]).status.code(),
        Some(1)
    );
    let typo = tmp.path().join("typo.json");
    fs::write(&typo, SMALL_CONFIG.replace("\"sweep\"", "\"sweeep\"")).unwrap();
    let o = arm(&typo, tmp.path(), &["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sweeep"), "{}", stderr(&o));
}

#[test]
fn solver_failure_exits_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("strict.json");
    let text = SMALL_CONFIG.replace(
        "\"sweep\"",
        "\"solver\": {\"max_outer_iterations\": 1, \"max_inner_iterations\": 2}, \"sweep\"",
    );
    fs::write(&cfg, text).unwrap();
    let o = arm(&cfg, tmp.path(), &["simulate", "--pull", "s1:30", "--payload", "50"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn workspace_single_segment_matches_reach_calibration() {
    let tmp = TempDir::new().unwrap();
    let v = ok_json(&arm(&bundled("arm.json"), tmp.path(), &["workspace", "--segments", "1"]));
    let r = v["r_max_mm"].as_f64().unwrap();
    assert!((r - 51.3).abs() < 0.01 * 51.3, "r_max {r}");
    let metrics: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("metrics.json")).unwrap()).unwrap();
    let keys: Vec<&String> = metrics.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 5);
    for k in ["r_max_mm", "planar_area_mm2", "volume_mm3", "z_min_mm", "z_max_mm"] {
        assert!(metrics.get(k).is_some(), "{k}");
    }
    assert!(fs::read_to_string(tmp.path().join("workspace.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn workspace_reports_scaling_and_degenerate_grid() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(&tmp);
    let v = ok_json(&arm(&cfg, tmp.path(), &["workspace", "--segments", "2"]));
    assert!(v["area_ratio_vs_1"].as_f64().unwrap() > 1.0);
    assert!(tmp.path().join("scaling.csv").exists());

    let v = ok_json(&arm(&cfg, tmp.path(), &["workspace", "--theta-steps", "1", "--phi-steps", "4"]));
    assert!(v["area_ratio_vs_1"].is_null());
    assert_eq!(v["r_max_mm"].as_f64().unwrap(), 0.0);
    assert_eq!(v["volume_mm3"].as_f64().unwrap(), 0.0);

    let o = arm(&cfg, tmp.path(), &["workspace", "--theta-steps", "10000", "--phi-steps", "10000"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("budget"));
}

#[test]
fn outputs_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(&tmp);
    let run = |threads: &str, sub: &str, args: &[&str]| {
        let out = tmp.path().join(sub);
        let o = Command::new(env!("CARGO_BIN_EXE_arm"))
            .env("ARM_THREADS", threads)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(args)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let ws = ["workspace", "--segments", "2", "--theta-steps", "20", "--phi-steps", "20"];
    let a = run("1", "a", &ws);
    let b = run("4", "b", &ws);
    for f in ["metrics.json", "cloud.csv", "scaling.csv", "workspace.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let sim = ["simulate", "--pull", "s1t2:20", "--payload", "30"];
    let a = run("1", "c", &sim);
    let b = run("3", "d", &sim);
    for f in ["equilibrium.json", "shape.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let o = Command::new(env!("CARGO_BIN_EXE_arm"))
        .env("ARM_THREADS", "many")
        .arg("--config")
        .arg(&cfg)
        .args(["simulate"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

/// Tip-marker CSV for a single constant-curvature segment swept over a
/// (θ, φ) grid; markers sit 4 mm apart ending at the tip.
fn synthetic_sweep(length: f64, theta_max: f64, thetas: usize, phis: usize) -> String {
    let mut s = String::from("frame,time_s,marker_id,x_mm,y_mm,z_mm\n");
    let mut frame = 0;
    for i in 0..thetas {
        let theta = theta_max * i as f64 / (thetas - 1) as f64;
        for j in 0..phis {
            let phi = std::f64::consts::TAU * j as f64 / phis as f64;
            let arc = ArcParams::from_bend(theta, phi, length).unwrap();
            for k in 0..5 {
                let p = arc_transform(&arc.truncated(length - 4.0 * k as f64).unwrap()).translation;
                let _ = writeln!(s, "{frame},{:.4},tip{},{:.12},{:.12},{:.12}", frame as f64 / 100.0, k + 1, p.x, p.y, p.z);
            }
            frame += 1;
        }
    }
    s
}

#[test]
fn analyze_workspace_recovers_generating_reach() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(&tmp);
    let (length, theta_max) = (100.0, 1.2_f64);
    let input = tmp.path().join("sweep.csv");
    fs::write(&input, synthetic_sweep(length, theta_max, 13, 24)).unwrap();
    let v = ok_json(&arm(
        &cfg,
        tmp.path(),
        &["analyze", "workspace", "--input", input.to_str().unwrap(), "--marker", "tip1"],
    ));
    let expected = length * (1.0 - theta_max.cos()) / theta_max;
    let r = v["r_max_mm"].as_f64().unwrap();
    assert!((r - expected).abs() < 0.1, "{r} vs {expected}");
    for f in ["metrics.json", "cloud.csv", "height.csv", "workspace.svg"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn analyze_bending_on_uniform_arc_is_constant() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(&tmp);
    let input = tmp.path().join("bend.csv");
    fs::write(&input, synthetic_sweep(100.0, 0.9, 2, 6)).unwrap();
    let o = arm(
        &cfg,
        tmp.path(),
        &["analyze", "bending", "--input", input.to_str().unwrap(), "--length", "100"],
    );
    ok_json(&o);
    let series = fs::read_to_string(tmp.path().join("bending.csv")).unwrap();
    let angles: Vec<f64> = series
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(angles.len(), 12);
    // First six frames are straight, the rest bent by the same 0.9 rad.
    for a in &angles[..6] {
        assert!(a.abs() < 1e-6, "{a}");
    }
    for a in &angles[6..] {
        assert!((a - 0.9_f64.to_degrees()).abs() < 1e-6, "{a}");
    }
}

#[test]
fn analyze_empty_file_is_a_parse_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(&tmp);
    let input = tmp.path().join("empty.csv");
    fs::write(&input, "").unwrap();
    let o = arm(&cfg, tmp.path(), &["analyze", "bending", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn calibrate_bundled_endpoints() {
    let tmp = TempDir::new().unwrap();
    let data = bundled("data/payload_endpoints.csv");
    let v = ok_json(&arm(
        &bundled("arm.json"),
        tmp.path(),
        &["calibrate", "--data", data.to_str().unwrap(), "--material", "ecoflex-0010"],
    ));
    assert!(v["relative_residual_norm"].as_f64().unwrap() < 0.10);
    assert_eq!(v["offset_fitted"], Value::Bool(true));
    let residuals = fs::read_to_string(tmp.path().join("residuals.csv")).unwrap();
    assert_eq!(residuals.lines().count(), 1 + 6);
    // The written config loads back and carries the fitted stiffness.
    let written: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("arm.json")).unwrap()).unwrap();
    let ei = written["materials"]["ecoflex-0010"]["bending_stiffness_nmm2"].as_f64().unwrap();
    assert!((ei - v["bending_stiffness_nmm2"].as_f64().unwrap()).abs() < 1e-3);
}

#[test]
fn calibrate_rejects_bad_data() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(&tmp);
    let missing = tmp.path().join("missing_cols.csv");
    fs::write(&missing, "material,payload_g,pull_mm\nsoft,0,45\n").unwrap();
    let o = arm(&cfg, tmp.path(), &["calibrate", "--data", missing.to_str().unwrap(), "--material", "soft"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("format"), "{}", stderr(&o));

    let single = tmp.path().join("single.csv");
    fs::write(
        &single,
        "material,payload_g,pull_mm,angle_deg,z_mm,tension_n,length_mm\nsoft,0,45,100,80,7,100\n",
    )
    .unwrap();
    let o = arm(&cfg, tmp.path(), &["calibrate", "--data", single.to_str().unwrap(), "--material", "soft"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let none = arm(&cfg, tmp.path(), &["calibrate", "--data", single.to_str().unwrap(), "--material", "other"]);
    assert_eq!(none.status.code(), Some(1));
}

#[test]
fn calibrate_recovers_synthetic_material() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(&tmp);
    // Generate targets from a known material, then fit them back.
    let truth = tmp.path().join("truth.json");
    fs::write(
        &truth,
        SMALL_CONFIG.replace("\"bending_stiffness_nmm2\": 2000, \"axial_stiffness_n\": 40", "\"bending_stiffness_nmm2\": 3000, \"axial_stiffness_n\": 30"),
    )
    .unwrap();
    let mut csv = String::from("material,payload_g,pull_mm,angle_deg,z_mm,tension_n,length_mm\n");
    for payload in ["0", "100", "200"] {
        let out = tmp.path().join(format!("gen{payload}"));
        let v = ok_json(&arm(
            &truth,
            &out,
            &["simulate", "--pull", "s1:40", "--payload", payload, "--segments", "1", "--length", "110"],
        ));
        let _ = writeln!(
            csv,
            "soft,{payload},40,{},{},{},110",
            v["ccfit_angle_deg"], v["vertical_displacement_mm"], v["tendon_tensions_n"][0][0]
        );
    }
    let data = tmp.path().join("synthetic.csv");
    fs::write(&data, csv).unwrap();
    let v = ok_json(&arm(
        &cfg,
        tmp.path(),
        &["calibrate", "--data", data.to_str().unwrap(), "--material", "soft"],
    ));
    let ei = v["bending_stiffness_nmm2"].as_f64().unwrap();
    let ea = v["axial_stiffness_n"].as_f64().unwrap();
    assert!((ei - 3000.0).abs() < 0.01 * 3000.0, "EI {ei}");
    assert!((ea - 30.0).abs() < 0.01 * 30.0, "EA {ea}");
    assert!(v["tension_offset_n"].as_f64().unwrap().abs() < 0.01);
}
