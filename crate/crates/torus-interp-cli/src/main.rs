use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{Map, Value};
use torus_interp_cli::runner::EXIT_INPUT;
use torus_interp_cli::{run, RunOptions};

#[derive(Parser)]
#[command(
    name = "torus-interp",
    version,
    about = "Run interpolation scenarios on elliptic curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write its report.
    Run {
        scenario: PathBuf,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write sampled values of the pipeline's function as CSV.
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the bound of every residual check.
        #[arg(long)]
        tol: Option<f64>,
        /// JSON object of tolerance overrides applied before the scenario's own.
        #[arg(long, env = "TORUS_INTERP_CONFIG")]
        config: Option<PathBuf>,
        /// Leave wall-clock timings out so reports compare byte for byte.
        #[arg(long)]
        no_timings: bool,
    },
}

fn input_error(msg: String) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_INPUT as u8)
}

fn load_config(path: &Option<PathBuf>) -> Result<Map<String, Value>, String> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(format!("config {}: expected a JSON object", path.display())),
        Err(e) => Err(format!("config {}: {e}", path.display())),
    }
}

fn main() -> ExitCode {
    let Command::Run {
        scenario,
        out,
        samples,
        seed,
        tol,
        config,
        no_timings,
    } = Cli::parse().command;
    let text = match fs::read_to_string(&scenario) {
        Ok(t) => t,
        Err(e) => return input_error(format!("{}: {e}", scenario.display())),
    };
    let config = match load_config(&config) {
        Ok(c) => c,
        Err(e) => return input_error(e),
    };
    let opts = RunOptions {
        seed,
        tol,
        config,
        timings: !no_timings,
        samples: samples.is_some(),
    };
    let result = run(&text, &opts);
    let json = serde_json::to_string_pretty(&result.report).expect("report serializes") + "\n";
    match &out {
        Some(p) => {
            if let Err(e) = fs::write(p, &json) {
                return input_error(format!("{}: {e}", p.display()));
            }
        }
        None => print!("{json}"),
    }
    if let (Some(p), Some(csv)) = (&samples, &result.csv) {
        if let Err(e) = fs::write(p, csv) {
            return input_error(format!("{}: {e}", p.display()));
        }
    }
    if let Some(err) = &result.report.error {
        eprintln!("error: {err}");
    }
    ExitCode::from(result.exit_code() as u8)
}
