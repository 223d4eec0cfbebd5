use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpperm_cli::input::read_matrix;
use dpperm_cli::plot::render_svg;
use dpperm_cli::single::{run_independence, run_two_sample, TestOptions};
use dpperm_cli::{run_experiment, write_csv, CliError, CliResult, ExperimentSpec};

/// Differentially private permutation tests.
///
/// Kernel statistics cost O(B (n + m)^2) per test; at the default B = 500,
/// samples of a few thousand rows take seconds to minutes.
#[derive(Debug, Parser)]
#[command(name = "dpperm", version)]
struct Cli {
    /// Worker threads; all cores when unset.
    #[arg(long, global = true, env = "DPPERM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two-sample test: do the rows of Y and Z come from the same distribution?
    TwoSample {
        /// CSV file with one observation of Y per row.
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        z: PathBuf,
        #[command(flatten)]
        opts: TestOptions,
    },
    /// Independence test between the first `split` columns and the rest.
    Independence {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: usize,
        #[command(flatten)]
        opts: TestOptions,
    },
    /// Level or power study over a grid described by a JSON spec.
    ///
    /// Defaults are n = m = 500, B = 500 and 100 repetitions per grid point.
    Experiment {
        spec: PathBuf,
        /// CSV output path; stdout when unset.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write an SVG chart of power against the swept axis.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Add a wall-clock `seconds` column (not reproducible).
        #[arg(long)]
        timing: bool,
    },
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::TwoSample { y, z, opts } => {
            let report = run_two_sample(read_matrix(&y)?, read_matrix(&z)?, &opts)?;
            println!("{}", report.to_json());
        }
        Command::Independence { data, split, opts } => {
            let report = run_independence(read_matrix(&data)?, split, &opts)?;
            println!("{}", report.to_json());
        }
        Command::Experiment { spec, out, svg, timing } => {
            let parsed = ExperimentSpec::from_file(&spec)?;
            let result = run_experiment(&parsed)?;
            match &out {
                Some(path) => {
                    let mut buf = Vec::new();
                    write_csv(&result.rows, timing, &mut buf)?;
                    write_file(path, &buf)?;
                }
                None => write_csv(&result.rows, timing, std::io::stdout().lock())?,
            }
            if let Some(path) = &svg {
                let title = format!("{}: power, alpha = {}", parsed.scenario.name(), parsed.alpha);
                write_file(path, render_svg(&result.rows, &title).as_bytes())?;
            }
            for f in &result.failures {
                eprintln!("dpperm: failed cell: {f}");
            }
            if result.any_failed() {
                return Err(CliError::Failed(format!("{} grid cells failed", result.failures.len())));
            }
        }
    }
    std::io::stdout().flush().map_err(|e| CliError::Failed(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match cli.threads {
        Some(0) => {
            eprintln!("dpperm: --threads must be positive");
            return ExitCode::from(2);
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("dpperm: cannot start worker threads: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpperm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
