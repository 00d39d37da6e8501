//! `smoothcert` command-line driver.

mod commands;
mod config;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;

#[derive(Parser)]
#[command(
    name = "smoothcert",
    version,
    about = "Certified robustness radii for Gaussian-smoothed classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify every point of a run file; writes certificates.csv and run.json.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Certify from previously sampled batch files instead of sampling.
        #[arg(long, num_args = 1..)]
        batches: Vec<PathBuf>,
    },
    /// Certified-accuracy curves (CSV and SVG per threat model) from a
    /// certificates report.
    Curve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        grid_points: usize,
        /// Upper end of the radius grid; defaults to 1.6 times the largest
        /// observed radius.
        #[arg(long)]
        max_radius: Option<f64>,
    },
    /// Analytic and Monte-Carlo cross-checks of the solver.
    Selftest {
        /// Run the fast subset only.
        #[arg(long)]
        quick: bool,
        /// Swap the slab endpoint labels to show the halfspace check catches it.
        #[arg(long, hide = true)]
        flip_interval_labels: bool,
    },
    /// Draw and store gradient sample batches for offline certification.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
        /// Shift every point's RNG stream, to draw independent extra batches.
        #[arg(long, default_value_t = 0)]
        stream_offset: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit with 1; 2 is reserved for per-point failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Certify {
            config,
            overrides,
            out,
            batches,
        } => commands::certify(config, overrides, out, batches),
        Command::Curve {
            input,
            out,
            grid_points,
            max_radius,
        } => commands::curve(input, out, *grid_points, *max_radius),
        Command::Selftest {
            quick,
            flip_interval_labels,
        } => commands::selftest(*quick, *flip_interval_labels),
        Command::Sample {
            config,
            overrides,
            out,
            stream_offset,
        } => commands::sample(config, overrides, out, *stream_offset),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
