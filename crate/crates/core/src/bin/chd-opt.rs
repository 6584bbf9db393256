//! Batch driver. Exit codes: 0 ok, 2 config error, 3 verification failure,
//! 4 solver failure. Failures additionally emit one JSON error record on
//! stderr so pipelines never have to parse prose.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use chd_core::config::parse_config;
use chd_core::modes::{run_mode, Mode};
use chd_core::ChdError;

#[derive(Parser)]
#[command(
    name = "chd-opt",
    about = "Cahn-Hilliard-Darcy solver and mass-source optimizer",
    version
)]
struct Cli {
    /// simulate, optimize, grad-check, hessian-check, or energy-audit.
    mode: String,
    /// Run description, flat `section.key = value` text.
    #[arg(long)]
    config: PathBuf,
    /// Directory for CSVs and field dumps, created if absent.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
}

/// Prints without panicking when stdout is a closed pipe (e.g. `| head`).
fn say(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn error_record(kind: &str, message: &str) {
    let record = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{record}");
}

fn fail(err: &ChdError) -> ExitCode {
    error_record(err.kind(), &err.to_string());
    if err.is_config_error() {
        ExitCode::from(2)
    } else {
        ExitCode::from(4)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let mode: Mode = match cli.mode.parse() {
        Ok(m) => m,
        Err(e) => return fail(&e),
    };
    let mut cfg = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    match run_mode(&cfg, mode, &cli.out) {
        Ok(report) => {
            say(&format!("{mode}: {}", report.summary));
            for artifact in &report.artifacts {
                say(&format!("  wrote {}", artifact.display()));
            }
            if report.verified {
                ExitCode::SUCCESS
            } else {
                error_record("verification", &format!("{mode}: {}", report.summary));
                ExitCode::from(3)
            }
        }
        Err(e) => fail(&e),
    }
}
