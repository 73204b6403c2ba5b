use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sslab_cli::commands::{cmd_generate, cmd_ingest, cmd_thresholds, format_report, load_spec};
use sslab_cli::plot::cmd_plot;
use sslab_cli::sweep::{cmd_sweep, specs_path};
use sslab_cli::verify::{run_suite, Suite, VerifyOptions};
use sslab_cli::{CliError, Result, SweepConfig};

#[derive(Parser)]
#[command(name = "sslab", version, about = "Linear self-supervised learning under Gaussian augmentation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fail on ill-conditioned systems instead of adding ridge jitter.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write one dataset draw as a model directory.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the alignment thresholds of a spectral spec.
    Thresholds {
        /// JSON spectral spec.
        #[arg(long)]
        config: PathBuf,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid sweep and write one CSV row per grid point.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV (default: the config's output_path).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run verification suites; exits with 1 if any check fails.
    Verify {
        /// Suites to run (default: all).
        #[arg(value_parser = parse_suite)]
        suites: Vec<Suite>,
        /// Random instances per check.
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 1.0, hide = true)]
        tolerance_scale: f64,
        /// Write the check results as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a sweep CSV as SVG line charts.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert IDX or CSV data into the binary matrix format.
    Ingest {
        input: PathBuf,
        /// IDX label file.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Label column of a CSV input.
        #[arg(long)]
        label_column: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_suite(s: &str) -> std::result::Result<Suite, String> {
    s.parse()
}

fn load_config(path: &PathBuf, global: &Global) -> Result<SweepConfig> {
    let mut config = SweepConfig::load(path)?;
    if let Some(seed) = global.seed {
        config.seeds = vec![seed];
    }
    config.strict |= global.strict;
    Ok(config)
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let global = &cli.global;
    match cli.command {
        Command::Generate { config, out } => {
            let config = load_config(&config, global)?;
            let manifest = cmd_generate(&config, global.seed, &out)?;
            println!("wrote {}", manifest.display());
        }
        Command::Thresholds { config, out } => {
            let report = cmd_thresholds(&load_spec(&config)?)?;
            print!("{}", format_report(&report.report));
            if let Some(out) = out {
                write_file(&out, &serde_json::to_vec_pretty(&report)?)?;
            }
        }
        Command::Sweep { config, out } => {
            let config = load_config(&config, global)?;
            let out = out
                .or_else(|| config.output_path.clone())
                .ok_or_else(|| CliError::Config("no output path: pass --out or set output_path".into()))?;
            let output = cmd_sweep(&config, global.threads, &out)?;
            let failed = output.rows.iter().filter(|r| r.error.is_some()).count();
            println!("wrote {} rows ({failed} failed) to {}", output.rows.len(), out.display());
            println!("specs in {}", specs_path(&out).display());
        }
        Command::Verify { suites, instances, tolerance_scale, out } => {
            let suites = if suites.is_empty() { Suite::ALL.to_vec() } else { suites };
            let opts = VerifyOptions { seed: global.seed.unwrap_or(0), tolerance_scale, instances };
            let mut checks = Vec::new();
            for suite in suites {
                for check in run_suite(suite, &opts) {
                    println!("{} {}/{}: {}", if check.passed { "PASS" } else { "FAIL" }, check.suite, check.name, check.detail);
                    checks.push(check);
                }
            }
            if let Some(out) = out {
                write_file(&out, &serde_json::to_vec_pretty(&checks)?)?;
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::VerificationFailed { failed, total: checks.len() });
            }
        }
        Command::Plot { csv, out } => {
            cmd_plot(&csv, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Ingest { input, labels, label_column, out } => {
            let summary = cmd_ingest(&input, labels.as_deref(), label_column.as_deref(), &out)?;
            println!("{} rows, {} features, {} classes", summary.rows, summary.features, summary.classes);
            for path in summary.outputs {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
