//! `twistorlab`: curvature block decomposition, taming verdicts, twistor
//! 2-form diagnostics and holomorphic-sphere continuation for Riemannian
//! 4-manifold charts.

mod commands;
mod config;
mod report;

use clap::Parser;
use commands::Status;
use config::{Command, Format, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "twistorlab",
    version,
    about = "Twistor-space curvature analysis of 4-manifold charts",
    after_help = "Commands: analyze, taming-scan, nijenhuis, reznikov-check, \
                  sphere-regularity, mechanism-demo.\n\
                  Threads are controlled by the RAYON_NUM_THREADS environment variable."
)]
struct Cli {
    /// Subcommand to run.
    command: String,
    /// Flat key-value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog metric name.
    #[arg(long)]
    metric: Option<String>,
    /// Expression-table metric file.
    #[arg(long)]
    metric_file: Option<PathBuf>,
    /// Region grid points per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Region centre, four comma-separated numbers.
    #[arg(long)]
    center: Option<String>,
    /// Region half-widths, four comma-separated numbers.
    #[arg(long)]
    half: Option<String>,
    /// Sample count for pointwise commands.
    #[arg(long)]
    samples: Option<usize>,
    /// Collocation grid size for sphere commands.
    #[arg(long = "N")]
    sphere_n: Option<usize>,
    /// Deformation amplitudes, comma-separated.
    #[arg(long = "t-values")]
    t_values: Option<String>,
    /// Spectral gap factor for kernel counting.
    #[arg(long)]
    gap_factor: Option<f64>,
    /// Seed for sample-point generation.
    #[arg(long)]
    seed: Option<u64>,
    /// Output format: json or markdown.
    #[arg(long)]
    format: Option<String>,
    /// Output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        config.load_file(path)?;
    }
    config.command = Command::parse(&cli.command)?;
    if let Some(v) = &cli.metric {
        config.apply("metric", v)?;
    }
    if let Some(v) = &cli.metric_file {
        config.apply("metric-file", &v.display().to_string())?;
    }
    if let Some(v) = cli.grid {
        config.apply("grid", &v.to_string())?;
    }
    if let Some(v) = &cli.center {
        config.apply("center", v)?;
    }
    if let Some(v) = &cli.half {
        config.apply("half", v)?;
    }
    if let Some(v) = cli.samples {
        config.apply("samples", &v.to_string())?;
    }
    if let Some(v) = cli.sphere_n {
        config.apply("sphere-n", &v.to_string())?;
    }
    if let Some(v) = &cli.t_values {
        config.apply("t-values", v)?;
    }
    if let Some(v) = cli.gap_factor {
        config.apply("gap-factor", &v.to_string())?;
    }
    if let Some(v) = cli.seed {
        config.apply("seed", &v.to_string())?;
    }
    if let Some(v) = &cli.format {
        config.apply("format", v)?;
    }
    if let Some(v) = &cli.out {
        config.apply("out", &v.display().to_string())?;
    }
    config.validate()?;
    Ok(config)
}

fn emit(config: &RunConfig, report: &report::Value) -> std::io::Result<()> {
    let text = match config.format {
        Format::Json => report::to_json(report),
        Format::Markdown => {
            report::to_markdown(report, &format!("twistorlab {}", config.command.name()))
        }
    };
    match &config.out {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn error_report(message: &str, code: i32) -> String {
    let mut v = report::Value::object();
    v.set("error", report::Value::Str(message.into()));
    v.set("exit_code", report::Value::Int(code as i64));
    v.set(
        "tool_version",
        report::Value::Str(env!("CARGO_PKG_VERSION").into()),
    );
    report::to_json(&v)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(&cli) {
        Ok(config) => config,
        Err(message) => {
            eprint!("{}", error_report(&message, 2));
            return ExitCode::from(2);
        }
    };
    match commands::run(&config) {
        Ok(output) => {
            if let Err(e) = emit(&config, &output.report) {
                eprint!("{}", error_report(&format!("cannot write report: {e}"), 2));
                return ExitCode::from(2);
            }
            match output.status {
                Status::Ok => ExitCode::SUCCESS,
                Status::Inconclusive => ExitCode::from(3),
            }
        }
        Err(twistorlab_core::EvalError::Inconclusive(message)) => {
            eprint!("{}", error_report(&message, 3));
            ExitCode::from(3)
        }
        Err(e) => {
            eprint!("{}", error_report(&e.to_string(), 2));
            ExitCode::from(2)
        }
    }
}
