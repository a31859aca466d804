//! End-to-end command tests: exit codes, file contracts, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_greybox")
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../examples")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn modes_on_three_node_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "modes",
        "--config",
        example("three_node.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--points",
        "50",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let modes: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("modes.json")).unwrap())
            .unwrap();
    let list = modes["modes"].as_array().unwrap();
    assert!(!list.is_empty());
    // The swing pair at ~1.77 Hz must be present.
    assert!(list.iter().any(|m| {
        let f = m["freq_hz"].as_f64().unwrap();
        (f - 1.774).abs() < 0.05
    }));
    for node in 1..=3 {
        let csv = std::fs::read_to_string(dir.path().join(format!("spectrum_{node}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "freq_hz,re_11,im_11,re_12,im_12,re_21,im_21,re_22,im_22"
        );
        assert_eq!(lines.count(), 50);
    }
}

#[test]
fn missing_config_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "modes",
        "--config",
        "/nonexistent/system.json",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_config_is_exit_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"base": {"f0_hz": []}}"#).unwrap();
    let out = run(&[
        "modes",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("f0_hz"), "stderr: {stderr}");
}

#[test]
fn invalid_sweep_window_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "modes",
        "--config",
        example("three_node.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--fmin",
        "100",
        "--fmax",
        "1",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn participate_writes_layer_reports_with_unit_normalization() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "participate",
        "--config",
        example("three_node.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for f in ["layer1.json", "layer2.json", "layer3.json", "modes.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let layer2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("layer2.json")).unwrap())
            .unwrap();
    for (_mode, row) in layer2.as_object().unwrap() {
        let total: f64 = row
            .as_object()
            .unwrap()
            .values()
            .map(|e| {
                let re = e["re_norm"].as_f64().unwrap();
                let im = e["im_norm"].as_f64().unwrap();
                (re * re + im * im).sqrt()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "normalized sum {total}");
    }
}

#[test]
fn empty_node_filter_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "participate",
        "--config",
        example("three_node.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--nodes",
        "9,12",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn empty_mode_selection_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "participate",
        "--config",
        example("three_node.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--mode-freq",
        "90000:99000",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn verify_writes_a_convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "participate",
        "--config",
        example("three_node.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--damping-below",
        "0.2",
        "--verify",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lemma_check.json")).unwrap())
            .unwrap();
    let checks = table["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    let mut first_order = 0usize;
    for c in checks {
        let errs = c["rel_errors"].as_array().unwrap();
        let last = errs.last().unwrap().as_f64().unwrap();
        assert!(last <= 1e-3, "rel error {last} too large: {c}");
        if c["first_order"].as_bool().unwrap() {
            first_order += 1;
        }
    }
    // Strongly participating pairs converge first order; weak pairs bottom
    // out at solver noise and are reported as they are.
    assert!(
        first_order * 10 >= checks.len() * 7,
        "{first_order}/{} first-order",
        checks.len()
    );
}

fn one_pole_csv(dir: &Path) -> PathBuf {
    // G(s) = 1/(s+1) sampled on 0.01..100 rad/s.
    let path = dir.join("one_pole.csv");
    let mut text = String::from("freq_hz,re_11,im_11\n");
    for i in 0..100 {
        let w = 0.01 * (100.0f64 / 0.01).powf(i as f64 / 99.0);
        let (re, im) = num_complex_like(w);
        text.push_str(&format!(
            "{:.11e},{:.11e},{:.11e}\n",
            w / (2.0 * std::f64::consts::PI),
            re,
            im
        ));
    }
    std::fs::write(&path, text).unwrap();
    path
}

/// 1/(jw + 1) without pulling a complex crate into the test.
fn num_complex_like(w: f64) -> (f64, f64) {
    let den = 1.0 + w * w;
    (1.0 / den, -w / den)
}

#[test]
fn fit_recovers_a_single_pole() {
    let dir = tempfile::tempdir().unwrap();
    let csv = one_pole_csv(dir.path());
    let out = run(&[
        "fit",
        csv.to_str().unwrap(),
        "--order",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit.json")).unwrap())
            .unwrap();
    let pole = &fit["poles"][0];
    assert!((pole["re"].as_f64().unwrap() + 1.0).abs() < 1e-6);
    assert!(fit["rms_rel"].as_f64().unwrap() < 1e-8);
    assert!(dir.path().join("quality.json").exists());
}

#[test]
fn fit_rejects_malformed_header() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "hz,re,im\n1,0,0\n2,0,0\n").unwrap();
    let out = run(&["fit", csv.to_str().unwrap(), "--order", "1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn fit_rejects_order_zero() {
    let dir = tempfile::tempdir().unwrap();
    let csv = one_pole_csv(dir.path());
    let out = run(&["fit", csv.to_str().unwrap(), "--order", "0"]);
    assert_eq!(code(&out), 2);
}

/// Acceptance: two consecutive full runs produce byte-identical reports.
#[test]
fn determinism_byte_identical_reports() {
    let base = tempfile::tempdir().unwrap();
    let mut digests: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for pass in 0..2 {
        let out_dir = base.path().join(format!("run{pass}"));
        std::fs::create_dir_all(&out_dir).unwrap();
        for sys in ["three_node.json", "four_bus.json"] {
            let sub = out_dir.join(sys.trim_end_matches(".json"));
            let out = run(&[
                "modes",
                "--quiet",
                "--config",
                example(sys).to_str().unwrap(),
                "--out",
                sub.to_str().unwrap(),
                "--points",
                "80",
            ]);
            assert_eq!(code(&out), 0);
            let out = run(&[
                "participate",
                "--quiet",
                "--config",
                example(sys).to_str().unwrap(),
                "--out",
                sub.to_str().unwrap(),
                "--damping-below",
                "0.3",
                "--verify",
            ]);
            assert_eq!(code(&out), 0);
        }
        let csv = one_pole_csv(&out_dir);
        let out = run(&[
            "fit",
            "--quiet",
            csv.to_str().unwrap(),
            "--order",
            "1",
            "--out",
            out_dir.join("fit").to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);

        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        collect_files(&out_dir, &out_dir, &mut files);
        files.sort_by(|a, b| a.0.cmp(&b.0));
        digests.push(files);
    }
    assert_eq!(digests[0].len(), digests[1].len());
    for (a, b) in digests[0].iter().zip(&digests[1]) {
        assert_eq!(a.0, b.0, "file sets differ");
        assert_eq!(a.1, b.1, "bytes differ for {}", a.0);
    }
    println!(
        "criterion 9: PASS (two runs, {} files byte-identical)",
        digests[0].len()
    );
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            let rel = path.strip_prefix(root).unwrap().display().to_string();
            out.push((rel, std::fs::read(&path).unwrap()));
        }
    }
}

#[test]
fn thread_cap_env_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin())
        .env("GREYBOX_THREADS", "1")
        .args([
            "modes",
            "--quiet",
            "--config",
            example("three_node.json").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--points",
            "40",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("spectrum_2.csv").exists());
}

#[test]
fn degenerate_spectrum_is_exit_four() {
    // Three identical parallel branches leave a two-dimensional circulating
    // subspace with an exactly repeated eigenvalue.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("degenerate.json");
    std::fs::write(
        &cfg,
        r#"{
  "base": {"f0_hz": 60.0},
  "nodes": [{"id": 1, "r": 1.0, "c": 0.0001}, {"id": 2, "r": 1.0, "c": 0.0001}],
  "branches": [
    {"from": 1, "to": 2, "r": 0.02, "l": 0.0004},
    {"from": 1, "to": 2, "r": 0.02, "l": 0.0004},
    {"from": 1, "to": 2, "r": 0.02, "l": 0.0004}
  ],
  "apparatus": []
}"#,
    )
    .unwrap();
    let out = run(&[
        "modes",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("degenerate"), "stderr: {stderr}");
}

#[test]
fn mode_frequency_window_selects_the_swing_band() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "participate",
        "--config",
        example("three_node.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--mode-freq",
        "1:3",
    ]);
    assert_eq!(code(&out), 0);
    let layer1: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("layer1.json")).unwrap())
            .unwrap();
    // Exactly the swing conjugate pair falls inside 1..3 Hz.
    assert_eq!(layer1.as_object().unwrap().len(), 2);
}
