use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn nts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nts")).args(args).output().expect("spawn nts")
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(nts(&["bogus"]).status.code(), Some(1));
    assert_eq!(nts(&["spectrum"]).status.code(), Some(1));
    assert_eq!(nts(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_exits_three() {
    let out = nts(&["stability", "--input", "/nonexistent/system.json"]);
    assert_eq!(out.status.code(), Some(3));
    let line = String::from_utf8(out.stderr).unwrap();
    let diag: serde_json::Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    assert_eq!(diag["level"], "error");
}

#[test]
fn spectrum_writes_roots() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let input = data("example1.json");
    let out = nts(&[
        "spectrum", "--input", input.to_str().unwrap(), "--out", out_dir, "--re-min", "-2", "--re-max", "3", "--im-max", "20",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("roots.csv")).unwrap();
    assert!(csv.starts_with("re,im,multiplicity"));
    // Real roots of 1 - λ + λe^{-λ} and 2 - λ + λe^{-λ} are present.
    let reals: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let im: f64 = f[1].parse().unwrap();
            (im.abs() < 1e-9).then(|| f[0].parse().unwrap())
        })
        .collect();
    for z in reals.iter().copied() {
        let g1 = 1.0 - z + z * (-z).exp();
        let g2 = 2.0 - z + z * (-z).exp();
        assert!(g1.abs().min(g2.abs()) < 1e-8, "{z}");
    }
    assert!(!reals.is_empty());
    let report = json(dir.path().join("spectrum.json"));
    assert!(report.is_object());
}

#[test]
fn stability_reports_indeterminate_case() {
    let input = data("example2.json");
    let out = nts(&["stability", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["case_code"], "case_iii_indeterminate");
}

#[test]
fn controllability_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    for (file, verdict) in [("example1_input_b2.json", "yes_within_window"), ("example1_input_b1.json", "no")] {
        let input = data(file);
        let out = nts(&["controllability", "--input", input.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let v = json(dir.path().join("controllability.json"));
        assert_eq!(v["null_controllable"], verdict, "{file}");
    }
}

#[test]
fn report_is_deterministic_and_consistent() {
    let input = data("example1_input_b2.json");
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = nts(&["report", "--input", input.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "7"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let index = json(dir.path().join("index.json"));
        let stability = std::fs::read_to_string(dir.path().join("stability.json")).unwrap();
        let roots = std::fs::read_to_string(dir.path().join("roots.csv")).unwrap();
        (index, stability, roots)
    };
    let (index, s1, r1) = run();
    let (_, s2, r2) = run();
    assert_eq!(s1, s2);
    assert_eq!(r1, r2);
    let checks = index["consistency"]["checks"].as_array().expect("consistency array");
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["ok"] == true), "{checks:?}");
}
