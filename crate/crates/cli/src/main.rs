mod commands;
mod config;

use clap::{Parser, Subcommand, ValueEnum};
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

/// Gaussian-expansion kernels for the electronic Schroedinger equation.
///
/// All quantities use units in which the kinetic term carries no factor 1/2: a
/// hydrogen-like ion has ground energy -Z^2/4 here, which is -Z^2/2 Hartree after
/// dividing energies by two.
#[derive(Debug, Parser)]
#[command(name = "gausskern", version)]
struct Cli {
    /// Worker threads, 0 picks the number of cores.
    #[arg(long, global = true, env = "GAUSSKERN_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SizeArg {
    Smoke,
    Full,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate an exponential sum against r^-beta as CSV.
    ExpsumTable {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        h: f64,
        #[arg(long, default_value_t = 1e-3)]
        rmin: f64,
        #[arg(long, default_value_t = 1e3)]
        rmax: f64,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
        #[arg(long, default_value_t = 1e-17)]
        tail_tol: f64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Contraction constants and the admissibility verdict as JSON.
    Constants {
        #[arg(long)]
        config: PathBuf,
    },
    /// Scheduled Neumann series for u + T u = f.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        order: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inverse iteration for the lowest eigenvalue.
    Eigen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = ["potential", "residual"])]
        variant: Option<String>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded validation suites with a pass/fail JSON report.
    Validate {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SizeArg::Full)]
        size: SizeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration.
    Usage(String),
    /// The computation itself failed or a check did not pass.
    Compute(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Compute(m) => f.write_str(m),
        }
    }
}

impl From<gausskern::Error> for CliError {
    fn from(e: gausskern::Error) -> Self {
        use gausskern::Error::*;
        match e {
            InvalidParameter(_) | DimensionMismatch { .. } | EmptyRange(_) | InadmissibleShift(_) | Serialization(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::ExpsumTable { beta, h, rmin, rmax, grid, tail_tol, out } => {
            commands::expsum_table(beta, h, rmin, rmax, grid, tail_tol, out.as_deref())
        }
        Command::Constants { config } => commands::constants(&config::parse_config(&config)?),
        Command::Solve { config, epsilon, order, out } => {
            let cfg = config::parse_config(&config)?;
            commands::solve(&cfg, epsilon, order, out)
        }
        Command::Eigen { config, variant, max_iter, out } => {
            let cfg = config::parse_config(&config)?;
            commands::eigen(cfg, variant.as_deref(), max_iter, out)
        }
        Command::Validate { suite, seed, size, out } => commands::validate(&suite, seed, size, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
