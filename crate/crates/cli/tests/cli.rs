use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hlevent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlevent"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn detect_on_l0() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = hlevent(&[
        "detect",
        "-c",
        fixture("l0.toml").to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out.join("hles.csv"));
    let review: Vec<_> = rows
        .iter()
        .filter(|r| &r[0] == "exec" && &r[1] == "review")
        .collect();
    assert_eq!(review.len(), 1);
    assert_eq!(&review[0][2], "1");
    assert_eq!(&review[0][4], "2");
    assert_eq!(&review[0][7], "c1;c2");
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "detect");
    assert_eq!(manifest["counts"]["events"], 9);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_then_detect() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = hlevent(&[
        "simulate",
        "-o",
        out,
        "--set",
        "simulate.preset=citizenship",
        "--set",
        "seed=1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("ground_truth.json").exists());
    let log = dir.path().join("log.csv");
    let o = hlevent(&[
        "detect",
        "-o",
        out,
        "--set",
        &format!("input.path={:?}", log.to_str().unwrap()),
        "--set",
        "aspects=[\"enqueue\"]",
        "--set",
        "thresholds.percentile=95",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!read_csv(&dir.path().join("hles.csv")).is_empty());
}

#[test]
fn missing_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = hlevent(&[
        "threads",
        "-o",
        out.to_str().unwrap(),
        "--set",
        "input.path=\"/nonexistent/log.csv\"",
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonexistent"));
    assert!(!out.exists());
}

#[test]
fn unknown_subcommand_fails() {
    let o = hlevent(&["discover"]);
    assert!(!o.status.success());
}

#[test]
fn config_errors_listed_together() {
    let o = hlevent(&[
        "detect",
        "--set",
        "thresholds.percentile=0",
        "--set",
        "proximity.lambda=3",
        "--set",
        "interplay.bins=\"deciles\"",
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    for key in ["percentile", "lambda", "bins"] {
        assert!(err.contains(key), "{err}");
    }
}

#[test]
fn every_subcommand_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let input = format!("input.path={:?}", fixture("L0.csv").to_str().unwrap());
    let common = [
        "--set",
        &input,
        "--set",
        "input.schema.timestamp_format=\"unix\"",
        "--set",
        "framing.width=\"10s\"",
        "--set",
        "framing.origin=\"0\"",
    ];
    let expected = [
        ("detect", &["hles.csv"][..]),
        ("cascades", &["cascades.json"][..]),
        ("threads", &["threads.csv"][..]),
        ("interplay", &["variants.csv", "interplay.csv"][..]),
        ("robustness", &["robustness.csv"][..]),
        ("export", &["hl_log.csv"][..]),
        ("plotdata", &["series.csv"][..]),
    ];
    for (cmd, files) in expected {
        let mut args = vec![
            cmd,
            "-o",
            out,
            "--set",
            "thresholds.percentile=100",
            "--set",
            "thresholds.min_case_count=1",
        ];
        args.extend(common);
        let o = hlevent(&args);
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        for f in files {
            assert!(dir.path().join(f).exists(), "{cmd} did not write {f}");
        }
    }
    let cascades: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("cascades.json")).unwrap()).unwrap();
    let n_hles = cascades["hles"].as_array().unwrap().len();
    let hl_log = read_csv(&dir.path().join("hl_log.csv"));
    assert_eq!(hl_log.len(), n_hles);
    let series = read_csv(&dir.path().join("series.csv"));
    assert!(series
        .iter()
        .any(|r| &r[0] == "delayNow" && &r[1] == "submit->review" && &r[2] == "1"));
}
