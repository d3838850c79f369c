use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn gspq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gspq"))
        .args(args)
        .output()
        .expect("spawn gspq")
}

fn ok(args: &[&str]) -> String {
    let out = gspq(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Header plus rows of numbers (booleans map to 0/1).
fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|f| match f {
                    "true" => 1.0,
                    "false" => 0.0,
                    "" => f64::NAN,
                    f => f.parse().unwrap(),
                })
                .collect()
        })
        .collect();
    (header, rows)
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

fn num(v: &serde_json::Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn eigen_matches_wiener_closed_form() {
    let text = ok(&["eigen", "--k", "0", "--T", "1", "--count", "10"]);
    let (header, rows) = parse_csv(&text);
    assert_eq!(header, ["k", "T", "ell", "x", "lambda", "c", "residual", "in_bracket"]);
    assert_eq!(rows.len(), 10);
    for r in &rows {
        let exact = 1.0 / ((r[2] - 0.5) * PI).powi(2);
        assert!(((r[4] - exact) / exact).abs() <= 1e-12);
        assert_eq!(r[5], 1.0);
        assert_eq!(r[7], 1.0);
    }
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn eigen_rows_sorted_and_ordered_in_k() {
    let (_, rows) = parse_csv(&ok(&["eigen", "--k", "0.7,0,0.5,0.3", "--count", "10"]));
    let ks: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    assert!(ks.windows(2).all(|w| w[0] <= w[1]));
    for ell in 0..10 {
        let lambdas: Vec<f64> = (0..4).map(|i| rows[i * 10 + ell][4]).collect();
        assert!(lambdas.windows(2).all(|w| w[0] < w[1]), "ell = {}", ell + 1);
    }
}

#[test]
fn paper_newton_agrees_with_bracketed() {
    let (_, newton) = parse_csv(&ok(&["eigen", "--k", "0.5", "--count", "1000", "--method", "paper-newton"]));
    let (_, bracketed) = parse_csv(&ok(&["eigen", "--k", "0.5", "--count", "1000"]));
    let mut compared = 0;
    for (n, b) in newton.iter().zip(&bracketed) {
        if n[7] == 1.0 {
            assert!((n[3] - b[3]).abs() <= 1e-9, "ell = {}", n[2]);
            compared += 1;
        }
    }
    assert!(compared > 900);
}

#[test]
fn numbers_round_trip_at_seventeen_digits() {
    let text = ok(&["eigen", "--k", "0.3", "--count", "5"]);
    for line in text.lines().skip(1) {
        for field in line.split(',').filter(|f| f.contains("e-") || f.ends_with("e0")) {
            let v: f64 = field.parse().unwrap();
            assert_eq!(format!("{v:.16e}"), field);
        }
    }
}

#[test]
fn cseq_columns_and_diagnostic() {
    let (header, rows) = parse_csv(&ok(&["cseq", "--k", "0", "--count", "50"]));
    assert_eq!(header, ["k", "T", "ell", "c"]);
    assert!(rows.iter().all(|r| r[3] == 1.0));

    let out = gspq(&["cseq", "--k", "0.3,0.5,0.7", "--count", "1000"]);
    assert!(out.status.success());
    let (_, rows) = parse_csv(&String::from_utf8(out.stdout).unwrap());
    for k in [0.3, 0.5, 0.7] {
        let c: Vec<f64> = rows.iter().filter(|r| r[0] == k).map(|r| r[3]).collect();
        assert_eq!(c.len(), 1000);
        assert!(c.iter().all(|&v| v >= 1.0));
        assert!(c[999] - 1.0 < 0.01);
    }
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("k = 0.5") && stderr.contains("3/2"), "{stderr}");
}

#[test]
fn quantizer_examples() {
    let doc = json(&ok(&["quantizer", "--k", "0.5", "--budget", "1", "--grid", "5"]));
    assert_eq!(doc["allocation"]["levels"].as_array().unwrap().len(), 0);
    let paths = doc["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 1);
    assert!(paths[0]["values"].as_array().unwrap().iter().all(|v| num(v) == 0.0));
    assert_eq!(num(&doc["distortion"]["lower"]), 1.0);
    assert_eq!(num(&doc["distortion"]["upper"]), 1.0);

    let doc = json(&ok(&["quantizer", "--k", "0", "--budget", "2"]));
    assert_eq!(doc["allocation"]["levels"], serde_json::json!([2]));
    let points = doc["coordinates"][0]["points"].as_array().unwrap();
    let want = 2.0 / PI * (2.0 / PI).sqrt();
    assert!((num(&points[1]) - want).abs() < 1e-12);
    assert!(doc.get("paths").is_none());

    let ex = json(&ok(&["quantizer", "--k", "0", "--budget", "16", "--alloc", "exhaustive"]));
    let gr = json(&ok(&["quantizer", "--k", "0", "--budget", "16", "--alloc", "greedy"]));
    let (e, g) = (num(&ex["distortion"]["upper"]), num(&gr["distortion"]["upper"]));
    assert!(e <= g && g <= 1.01 * e);
}

#[test]
fn quantizer_rendering_cap() {
    let out = gspq(&["quantizer", "--k", "0.5", "--budget", "8192", "--grid", "8"]);
    assert_eq!(out.status.code(), Some(2));
    ok(&["quantizer", "--k", "0.5", "--budget", "8192", "--grid", "8", "--no-paths"]);
}

fn verify_sidecar(path: &Path) -> serde_json::Value {
    let manifest_path = format!("{}.manifest.json", path.display());
    let manifest = json(&fs::read_to_string(manifest_path).unwrap());
    let entry = &manifest["outputs"][0];
    assert_eq!(entry["file"], path.file_name().unwrap().to_str().unwrap());
    let digest = hex::encode(Sha256::digest(fs::read(path).unwrap()));
    assert_eq!(entry["sha256"], digest.as_str());
    manifest
}

#[test]
fn distortion_table_and_rate_fit() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    ok(&[
        "distortion",
        "--k",
        "0.5",
        "--budgets",
        "16,4,64,256",
        "--mc-samples",
        "20000",
        "--seed",
        "3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let manifest = verify_sidecar(&csv);
    assert_eq!(manifest["seed"], 3);
    let (header, rows) = parse_csv(&fs::read_to_string(&csv).unwrap());
    assert_eq!(
        header,
        ["n", "distortion_lower", "distortion_upper", "mc_mean", "mc_stderr", "theta_lower", "theta_upper"]
    );
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), [4.0, 16.0, 64.0, 256.0]);
    for r in &rows {
        assert!(r[1] <= r[2]);
        assert!(r[3] >= r[1] - 3.0 * r[4] && r[3] <= r[2] + 3.0 * r[4]);
        let ln = r[0].ln();
        assert!((r[5] - 2.0 / (PI * PI * ln)).abs() < 1e-15);
        assert!((r[6] / r[5] - 1.5).abs() < 1e-15);
    }
    assert!(rows.windows(2).all(|w| w[1][2] <= w[0][2]));

    let report = dir.path().join("r.json");
    ok(&["rate", "--input", csv.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    verify_sidecar(&report);
    let fit = json(&fs::read_to_string(&report).unwrap());
    let e = num(&fit["fit"]["exponent"]);
    assert!((-1.5..-0.7).contains(&e), "{e}");
    assert_eq!(num(&fit["fit"]["error_exponent"]), e / 2.0);
}

#[test]
fn rate_on_synthetic_input() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let mut text = String::from("n,distortion_upper\n");
    for e in 2..=10 {
        let n = 2f64.powi(e);
        text.push_str(&format!("{n},{:e}\n", 2.0 / n.ln()));
    }
    fs::write(&csv, text).unwrap();
    let fit = json(&ok(&["rate", "--input", csv.to_str().unwrap()]));
    assert!((num(&fit["fit"]["exponent"]) + 1.0).abs() < 1e-10);
    assert!((num(&fit["fit"]["coefficient"]) - 2.0).abs() < 1e-10);
}

#[test]
fn rate_on_cseq() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    ok(&["cseq", "--k", "0,0.5", "--T", "2", "--count", "1000", "--out", csv.to_str().unwrap()]);
    let report = json(&ok(&["rate", "--cseq", csv.to_str().unwrap()]));
    let groups = report["cseq"].as_array().unwrap();
    assert_eq!(groups.len(), 2);
    assert_eq!(num(&groups[0]["c_inf"]), 1.0);
    assert!((num(&groups[0]["remark_coefficient"]) - 2.0 * 2f64.sqrt() / PI).abs() < 1e-15);
    assert!((num(&groups[1]["c_inf"]) - 1.0).abs() < 0.005);
    assert!((num(&groups[1]["remark_coefficient"]) - 2.0 * 2f64.sqrt() / PI).abs() < 1e-2);
}

#[test]
fn rate_rejects_malformed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "n,distortion_upper\n4,0.2\n8,abc\n16,0.1\n32,0.09\n").unwrap();
    let out = gspq(&["rate", "--input", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn figures_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("figs");
    ok(&["figures", "--outdir", out.to_str().unwrap()]);
    let (_, fig1) = parse_csv(&fs::read_to_string(out.join("fig1.csv")).unwrap());
    assert_eq!(fig1.len(), 40);
    assert!((fig1[0][4] * PI * PI / 4.0 - 1.0).abs() < 1e-15);
    let (_, fig2) = parse_csv(&fs::read_to_string(out.join("fig2.csv")).unwrap());
    assert_eq!(fig2.len(), 3000);
    assert!(fig2.iter().all(|r| r[3] >= 1.0));
    let manifest = json(&fs::read_to_string(out.join("manifest.json")).unwrap());
    for entry in manifest["outputs"].as_array().unwrap() {
        let bytes = fs::read(out.join(entry["file"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"], hex::encode(Sha256::digest(bytes)).as_str());
    }
    assert!(!manifest.to_string().contains(out.to_str().unwrap()));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(gspq(&["eigen"]).status.code(), Some(2));
    assert_eq!(gspq(&["eigen", "--k", "-1"]).status.code(), Some(2));
    assert_eq!(gspq(&["eigen", "--k", "0", "--T", "0"]).status.code(), Some(2));
    assert_eq!(gspq(&["distortion", "--k", "0", "--budgets", "1"]).status.code(), Some(2));
    assert_eq!(gspq(&["rate"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    fs::write(&file, "x").unwrap();
    let blocked = file.join("sub");
    assert_eq!(gspq(&["figures", "--outdir", blocked.to_str().unwrap()]).status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_gspq"))
        .args(["eigen", "--k", "0"])
        .env("GSPQ_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_does_not_change_output() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_gspq"))
            .args(["eigen", "--k", "0.3,0.6", "--count", "200"])
            .env("GSPQ_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("3"));
}
