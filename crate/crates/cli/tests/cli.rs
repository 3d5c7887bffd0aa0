//! End-to-end tests of the `nlnoise` binary: exit codes, CSV outputs,
//! determinism, overrides, and the CSV import/export round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_nlnoise")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin()).args(args).current_dir(cwd).output().unwrap()
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(path).unwrap()
}

const FIG_G: &str = r#"
seed = 42

[circuit]
kind = "rc_nonlin_g"
r = 100.0
c0 = 100e-15
g2 = 10e-3

[excitation]
amplitude = 0.05
omega0 = 1e11

[probe]
amplitude = 1e-4
omega_m_ratio = 0.01
"#;

/// Parse a results.csv into header + float-or-string cells.
fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn cell(rows: &[Vec<String>], header: &[String], row: usize, name: &str) -> f64 {
    let col = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[row][col].parse().unwrap()
}

#[test]
fn analyze_single_point_at_unity_corner() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("c.toml"), FIG_G);
    let out = run(&["analyze", "--config", "c.toml", "--out", "o"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = parse_csv(&read(dir.path().join("o/results.csv")));
    assert_eq!(rows.len(), 1, "empty sweep gives a single-point table");
    assert!((cell(&rows, &header, 0, "h_am") + 1.0).abs() < 1e-12);
    assert!((cell(&rows, &header, 0, "h_pm") - 1.0).abs() < 1e-12);
    assert!(dir.path().join("o/manifest.json").exists());
    assert!(dir.path().join("o/run.log").exists());
}

#[test]
fn analyze_sweep_rows_follow_the_axis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{FIG_G}\n[[sweep.axes]]\nparam = \"excitation.omega0\"\nvalues = [1e10, 1e11, 1e12]\n"
    );
    write(&dir.path().join("c.toml"), &cfg);
    let out = run(&["analyze", "--config", "c.toml", "--out", "o"], dir.path());
    assert!(out.status.success());
    let (header, rows) = parse_csv(&read(dir.path().join("o/results.csv")));
    assert_eq!(rows.len(), 3);
    assert_eq!(header[0], "excitation.omega0");
    let h_am_mid = cell(&rows, &header, 1, "h_am");
    assert!((h_am_mid + 1.0).abs() < 1e-12, "middle point sits at the corner");
}

#[test]
fn invalid_circuit_tag_exits_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("c.toml"), FIG_G);
    let out = run(
        &["analyze", "--config", "c.toml", "--set", "circuit.kind=frobnicator", "--out", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("circuit.kind"), "stderr: {err}");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("c.toml"), &format!("{FIG_G}\nbogus_key = 1\n"));
    let out = run(&["analyze", "--config", "c.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["analyze", "--config", "nope.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn computation_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // Probe amplitude above 1% of the excitation violates the two-tone
    // precondition at run time.
    write(&dir.path().join("c.toml"), FIG_G);
    let out = run(
        &["simulate", "--config", "c.toml", "--set", "probe.amplitude=0.01", "--out", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    // The failed point is marked and the table still parses.
    let (header, rows) = parse_csv(&read(dir.path().join("o/results.csv")));
    let status_col = header.iter().position(|h| h == "status").unwrap();
    assert!(rows[0][status_col].starts_with("error:"));
}

#[test]
fn simulate_matches_theory_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("c.toml"), FIG_G);
    let out = run(&["simulate", "--config", "c.toml", "--out", "a"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = parse_csv(&read(dir.path().join("a/results.csv")));
    assert!(cell(&rows, &header, 0, "rel_err_am") < 0.05);
    assert!(cell(&rows, &header, 0, "rel_err_pm") < 0.05);

    // Identical run: byte-identical table.
    let out = run(&["simulate", "--config", "c.toml", "--out", "b"], dir.path());
    assert!(out.status.success());
    assert_eq!(
        read(dir.path().join("a/results.csv")),
        read(dir.path().join("b/results.csv"))
    );

    // The probe path is deterministic and noise-free, so a different seed
    // changes nothing.
    let out = run(&["simulate", "--config", "c.toml", "--seed", "777", "--out", "s"], dir.path());
    assert!(out.status.success());
    assert_eq!(
        read(dir.path().join("a/results.csv")),
        read(dir.path().join("s/results.csv"))
    );
}

#[test]
fn validity_violation_is_flagged_in_every_row() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("c.toml"), FIG_G);
    let out = run(
        &["simulate", "--config", "c.toml", "--set", "excitation.amplitude=0.5", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = parse_csv(&read(dir.path().join("o/results.csv")));
    for i in 0..rows.len() {
        assert!(
            cell(&rows, &header, i, "validity_metric") > 0.1,
            "row {i} must carry the out-of-range expansion parameter"
        );
    }
}

#[test]
fn set_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("c.toml"), FIG_G);
    let a = run(&["analyze", "--config", "c.toml", "--out", "a"], dir.path());
    assert!(a.status.success());
    let b = run(
        &["analyze", "--config", "c.toml", "--set", "circuit.g2=20e-3", "--out", "b"],
        dir.path(),
    );
    assert!(b.status.success());
    let (header, rows_a) = parse_csv(&read(dir.path().join("a/results.csv")));
    let (_, rows_b) = parse_csv(&read(dir.path().join("b/results.csv")));
    let ham_a = cell(&rows_a, &header, 0, "h_am");
    let ham_b = cell(&rows_b, &header, 0, "h_am");
    assert!((ham_b - 2.0 * ham_a).abs() < 1e-12, "H_AM scales with g2");
    // And the override is recorded in the manifest.
    let manifest = read(dir.path().join("b/manifest.json"));
    assert!(manifest.contains("circuit.g2=20e-3"));
}

#[test]
fn extract_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("c.toml"),
        "[bjt]\nsource = \"synthetic\"\nbias_ic = 1e-3\nexport_op_table = true\n",
    );
    let a = run(&["extract", "--config", "c.toml", "--out", "a"], dir.path());
    assert!(a.status.success(), "stderr: {}", String::from_utf8_lossy(&a.stderr));
    let (header, rows) = parse_csv(&read(dir.path().join("a/coeffs.csv")));
    let g_m1 = cell(&rows, &header, 0, "g_m1");
    assert!((g_m1 - 38.68e-3).abs() / 38.68e-3 < 0.01, "g_m1 = {g_m1}");

    // Feed the exported table back through the CSV import path.
    let op_table = dir.path().join("a/op_table.csv");
    write(
        &dir.path().join("c2.toml"),
        &format!(
            "[bjt]\nsource = \"csv\"\ncsv_path = {:?}\nbias_ic = 1e-3\n",
            op_table.to_str().unwrap()
        ),
    );
    let b = run(&["extract", "--config", "c2.toml", "--out", "b"], dir.path());
    assert!(b.status.success(), "stderr: {}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(
        read(dir.path().join("a/coeffs.csv")),
        read(dir.path().join("b/coeffs.csv")),
        "in-memory and CSV pipelines must agree exactly"
    );
    assert_eq!(
        read(dir.path().join("a/results.csv")),
        read(dir.path().join("b/results.csv"))
    );
}

#[test]
fn extract_missing_csv_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("c.toml"),
        "[bjt]\nsource = \"csv\"\ncsv_path = \"missing.csv\"\n",
    );
    let out = run(&["extract", "--config", "c.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn psd_white_noise_ratio_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{FIG_G}\n[noise]\nkind = \"white\"\npsd_level = 4e-18\n\n[psd]\nn_samples = 1048576\n"
    );
    write(&dir.path().join("c.toml"), &cfg);
    let a = run(&["psd", "--config", "c.toml", "--out", "a"], dir.path());
    assert!(a.status.success(), "stderr: {}", String::from_utf8_lossy(&a.stderr));
    let (header, rows) = parse_csv(&read(dir.path().join("a/results.csv")));
    assert!(cell(&rows, &header, 0, "rel_err") < 0.10, "|H_AM|^2 off");
    assert!(cell(&rows, &header, 1, "rel_err") < 0.10, "|H_PM|^2 off");
    for f in ["s_in.csv", "s_an.csv", "s_phin.csv"] {
        assert!(dir.path().join("a").join(f).exists());
    }
    // Same manifest, bit-identical outputs.
    let b = run(&["psd", "--config", "c.toml", "--out", "b"], dir.path());
    assert!(b.status.success());
    for f in ["results.csv", "s_in.csv", "s_an.csv", "s_phin.csv"] {
        assert_eq!(
            read(dir.path().join("a").join(f)),
            read(dir.path().join("b").join(f)),
            "{f} must be bit-identical across runs"
        );
    }
}

#[test]
fn psd_flicker_slope_flows_through() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{FIG_G}\n[noise]\nkind = \"flicker\"\npsd_at_1hz = 1e-10\nf_low = 1e6\nf_high = 5e8\n\n[psd]\nn_samples = 8388608\n"
    );
    write(&dir.path().join("c.toml"), &cfg);
    let out = run(&["psd", "--config", "c.toml", "--out", "o"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    // Phase-noise spectrum keeps the 1/f shape in-band: fit the log-log
    // slope over [f0/400, f0/100].
    let (_, rows) = parse_csv(&read(dir.path().join("o/s_phin.csv")));
    let f0 = 1e11 / (2.0 * std::f64::consts::PI);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r[0].parse::<f64>().unwrap(), r[1].parse::<f64>().unwrap()))
        .filter(|(f, v)| *f >= f0 / 400.0 && *f <= f0 / 100.0 && *v > 0.0)
        .map(|(f, v)| (f.log10(), v.log10()))
        .collect();
    assert!(pts.len() > 10);
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    assert!(
        (-1.2..=-0.8).contains(&slope),
        "S_phin slope {slope:.3} outside [-1.2, -0.8]"
    );
}

#[test]
fn jobs_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{FIG_G}\n[[sweep.axes]]\nparam = \"excitation.omega0\"\nvalues = [5e10, 1e11, 2e11, 4e11]\n"
    );
    write(&dir.path().join("c.toml"), &cfg);
    let a = run(&["simulate", "--config", "c.toml", "--jobs", "1", "--out", "a"], dir.path());
    assert!(a.status.success());
    let b = run(&["simulate", "--config", "c.toml", "--jobs", "4", "--out", "b"], dir.path());
    assert!(b.status.success());
    assert_eq!(
        read(dir.path().join("a/results.csv")),
        read(dir.path().join("b/results.csv")),
        "worker count must not affect results or ordering"
    );
}
