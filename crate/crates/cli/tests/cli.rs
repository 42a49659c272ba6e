//! End-to-end tests of the binary: flags, report formats, exit codes, and
//! the fixed-seed determinism contract.

use std::fs;
use std::process::{Command, Output};

use conformal_spectra::eigen::coexact_spectrum;
use conformal_spectra::{ComplexSpec, ConformalProfile, SolverOptions};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conformal-spectra"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Column names and data rows of a CSV report, skipping `#` header lines.
fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let columns: Vec<String> =
        lines.next().expect("column row").split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (columns, rows)
}

fn last_stderr_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_else(|| panic!("no stderr in {text:?}"));
    serde_json::from_str(line).unwrap_or_else(|e| panic!("bad error record {line:?}: {e}"))
}

#[test]
fn spectrum_reports_the_requested_nonzero_values() {
    let out = run(&["spectrum", "--complex", "cycle:8", "--p", "0", "--m", "4"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let (columns, rows) = csv_rows(&text);
    assert_eq!(columns, ["index", "mu"]);
    assert_eq!(rows.len(), 4);

    let complex = ComplexSpec::parse("cycle:8").unwrap().build().unwrap();
    let profile = ConformalProfile::uniform(complex.n_cells(0), 1.0).unwrap();
    let slice = coexact_spectrum(&complex, &profile, 0, &SolverOptions::default()).unwrap();
    for (row, expected) in rows.iter().zip(&slice.eigenvalues) {
        let mu: f64 = row[1].parse().unwrap();
        assert!(mu > 0.0);
        assert_eq!(mu, *expected);
    }
}

#[test]
fn dodziuk_check_at_tau_one_reports_exact_unit_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("check.csv");
    let out = run(&[
        "dodziuk-check",
        "--tau",
        "1",
        "--n",
        "5",
        "--trials",
        "10",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let (columns, rows) = csv_rows(&fs::read_to_string(&path).unwrap());
    let worst = columns.iter().position(|c| c == "worst_ratio").unwrap();
    let contained = columns.iter().position(|c| c == "contained").unwrap();
    assert_eq!(rows.len(), 10);
    for row in &rows {
        assert_eq!(row[worst], "1.0000000000000000e0");
        assert_eq!(row[contained], "true");
    }
}

#[test]
fn missing_config_is_a_config_error() {
    let out = run(&["mcgowan", "--config", "/nonexistent/cover.json"]);
    assert_eq!(out.status.code(), Some(2));
    let record = last_stderr_record(&out);
    assert_eq!(record["exit"], 2);
    assert_eq!(record["subcommand"], "mcgowan");
}

#[test]
fn degenerate_targets_are_rejected_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("targets.json");
    fs::write(&path, r#"{"n": 5, "N": 2, "nu": [[1.0, 1.0]], "V0": 1.0, "delta": 0.1}"#)
        .unwrap();
    let out = run(&["prescribe", "--targets", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(last_stderr_record(&out)["exit"], 2);
}

#[test]
fn mcgowan_matches_the_hand_value() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cover.json");
    fs::write(
        &path,
        r#"{
            "domain_eigenvalues": [1.0, 1.0],
            "intersections": [{"domains": [0, 1], "eigenvalue": 1.0, "harmonic_dim": 0}],
            "gradient_bound": 1.0
        }"#,
    )
    .unwrap();
    let out = run(&["mcgowan", "--config", path.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["data"]["denominator"], 10.0);
    assert_eq!(doc["data"]["bound"], 0.1);
    assert_eq!(doc["data"]["k_q"], 1);
}

#[test]
fn reports_are_byte_identical_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = run(&[
            "dodziuk-check",
            "--tau",
            "1.5",
            "--n",
            "2",
            "--trials",
            "5",
            "--seed",
            "9",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn handle_sweep_emits_one_row_per_radius_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = run(&[
        "handle-sweep",
        "--left",
        "cycle:12",
        "--right",
        "cycle:16",
        "--eps-list",
        "0.2,0.1",
        "--degrees",
        "0",
        "--m",
        "4",
        "--threads",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let (columns, rows) = csv_rows(&fs::read_to_string(&path).unwrap());
    assert_eq!(
        columns,
        ["epsilon", "degree", "index", "glued", "reference", "max_relative_deviation"]
    );
    assert_eq!(rows.len(), 8);
    for row in &rows {
        let deviation: f64 = row[5].parse().unwrap();
        assert!(deviation.is_finite() && deviation >= 0.0);
    }
}

#[test]
fn radial_cylinder_matches_the_analytic_value() {
    let out = run(&[
        "radial", "--n", "5", "--p", "1", "--eta", "1.0", "--kind", "cylinder", "--grid",
        "400", "--count", "2",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# kernel_dim = 1"));
    let (_, rows) = csv_rows(&text);
    let first: f64 = rows[0][1].parse().unwrap();
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    assert!((first - pi2).abs() / pi2 < 1e-3, "first nonzero {first} vs {pi2}");
}

#[test]
fn prescribe_hits_a_single_target_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let targets = dir.path().join("targets.json");
    let result = dir.path().join("result.json");
    fs::write(&targets, r#"{"n": 5, "N": 1, "nu": [[1.0]], "V0": 1.0, "delta": 0.4}"#)
        .unwrap();
    let out = run(&[
        "prescribe",
        "--targets",
        targets.to_str().unwrap(),
        "--tol",
        "5e-2",
        "--eps-schedule",
        "0.3",
        "--max-evals",
        "20",
        "--out",
        result.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&result).unwrap()).unwrap();
    let data = &doc["data"];
    assert_eq!(data["converged"], true);
    assert_eq!(data["guard_ok"], true);
    let mu = data["achieved_mu"][0][0].as_f64().unwrap();
    let vol = data["achieved_volume"].as_f64().unwrap();
    assert!((mu - 1.0).abs() <= 5e-2, "achieved {mu}");
    assert!((vol - 1.0).abs() <= 5e-2, "achieved {vol}");
}

#[test]
fn stamp_is_recorded_only_on_request() {
    let plain = run(&["spectrum", "--complex", "cycle:4", "--p", "0", "--m", "2"]);
    assert!(plain.status.success());
    assert!(!String::from_utf8_lossy(&plain.stdout).contains("generated_at"));
    let stamped =
        run(&["spectrum", "--complex", "cycle:4", "--p", "0", "--m", "2", "--stamp"]);
    assert!(stamped.status.success());
    assert!(String::from_utf8_lossy(&stamped.stdout).contains("# generated_at = unix:"));
}
