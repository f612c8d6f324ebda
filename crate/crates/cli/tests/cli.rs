//! End-to-end tests of the command-line interface: expression-defined
//! metrics, config files, output formats and exit codes.

use std::process::Command;

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_twistorlab")
}

fn write_round_s4_table(dir: &std::path::Path) -> std::path::PathBuf {
    let factor = "4/(1+x1^2+x2^2+x3^2+x4^2)^2";
    let mut text = String::new();
    for i in 1..=4 {
        for j in i..=4 {
            let expr = if i == j { factor } else { "0" };
            text.push_str(&format!("g{i}{j} = {expr}\n"));
        }
    }
    text.push_str("orientation = 1\ndomain = ball 1.8\n");
    let path = dir.join("round_s4_table.metric");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn expression_metric_reproduces_catalog_round_sphere() {
    let dir = std::env::temp_dir().join("twistorlab-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let table = write_round_s4_table(&dir);

    let args_common = [
        "analyze",
        "--grid",
        "2",
        "--half",
        "0.35,0.35,0.35,0.35",
        "--center",
        "0.1,0,0,-0.1",
    ];
    let catalog_out = Command::new(exe())
        .args(args_common)
        .args(["--metric", "round-s4"])
        .output()
        .unwrap();
    let expr_out = Command::new(exe())
        .args(args_common)
        .args(["--metric-file", table.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(catalog_out.status.success());
    assert!(expr_out.status.success());

    // Compare every float in the per_point sections; metric names differ,
    // so compare numbers rather than bytes.
    let catalog_text = String::from_utf8(catalog_out.stdout).unwrap();
    let expr_text = String::from_utf8(expr_out.stdout).unwrap();
    let floats = |text: &str| -> Vec<f64> {
        // The degenerate-minimiser direction is not unique for A = Id, so
        // the comparison covers blocks, scalars and margins only.
        let start = text.find("\"per_point\"").unwrap();
        text[start..]
            .lines()
            .filter(|line| !line.contains("argmin_theta"))
            .flat_map(|line| line.split(|c: char| !(c.is_ascii_digit() || "+-.e".contains(c))))
            .filter(|tok| tok.contains('e') && tok.len() > 6)
            .filter_map(|tok| tok.parse::<f64>().ok())
            .collect()
    };
    let a = floats(&catalog_text);
    let b = floats(&expr_text);
    assert_eq!(a.len(), b.len(), "report structures differ");
    for (x, y) in a.iter().zip(b.iter()) {
        assert!(
            (x - y).abs() <= 1e-10 * x.abs().max(1.0),
            "expression metric deviates: {x} vs {y}"
        );
    }
}

#[test]
fn config_file_drives_a_run_and_flags_override() {
    let dir = std::env::temp_dir().join("twistorlab-cli-config");
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("run.cfg");
    std::fs::write(
        &config,
        "# minimal run\ncommand = analyze\nmetric = flat\ngrid = 2\nhalf = 0.4,0.4,0.4,0.4\n",
    )
    .unwrap();
    let out = Command::new(exe())
        .args(["analyze", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    // Flat chart margins sit in the degenerate band: exit code 3.
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"metric\": \"flat\""));

    // Override the metric from the command line.
    let out = Command::new(exe())
        .args([
            "analyze",
            "--config",
            config.to_str().unwrap(),
            "--metric",
            "round-s4",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"metric\": \"round-s4\""));
}

#[test]
fn unknown_metric_exits_2_with_error_json() {
    let out = Command::new(exe())
        .args(["analyze", "--metric", "nosuch"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stderr).unwrap();
    assert!(text.contains("\"error\""), "stderr: {text}");
    assert!(text.contains("nosuch"));
}

#[test]
fn bad_config_key_exits_2() {
    let dir = std::env::temp_dir().join("twistorlab-cli-bad");
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("bad.cfg");
    std::fs::write(&config, "wibble = 3\n").unwrap();
    let out = Command::new(exe())
        .args(["analyze", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn markdown_format_renders_tables() {
    let out = Command::new(exe())
        .args([
            "taming-scan",
            "--metric",
            "hyperbolic-h4",
            "--grid",
            "2",
            "--half",
            "0.2,0.2,0.2,0.2",
            "--format",
            "markdown",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# twistorlab taming-scan"));
    assert!(text.contains("| "), "markdown should contain tables: {text}");
    assert!(text.contains("tamed-J-"));
}

#[test]
fn report_written_to_file_matches_stdout() {
    let dir = std::env::temp_dir().join("twistorlab-cli-out");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.json");
    let args = [
        "analyze",
        "--metric",
        "s2xs2",
        "--grid",
        "2",
        "--half",
        "0.3,0.3,0.3,0.3",
    ];
    let stdout_run = Command::new(exe()).args(args).output().unwrap();
    let file_run = Command::new(exe())
        .args(args)
        .args(["--out", path.to_str().unwrap()])
        .output()
        .unwrap();
    // The product chart sits on the degenerate taming boundary, so the run
    // reports inconclusive (3) while still emitting the full report.
    assert_eq!(file_run.status.code(), Some(3));
    assert_eq!(stdout_run.status.code(), Some(3));
    let from_file = std::fs::read(&path).unwrap();
    assert_eq!(stdout_run.stdout, from_file);
}
