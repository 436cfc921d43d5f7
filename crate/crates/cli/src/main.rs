//! `nhpp` — fit a smooth time-varying event rate to annual count data,
//! test for a rate change at a given year, simulate synthetic series, and
//! dump the underlying spline basis.

mod ingest;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nhpp_core::changepoint::TestVariant;

/// Smooth intensity estimation and exact change-point testing for annual
/// event-count series.
#[derive(Parser)]
#[command(name = "nhpp", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a smooth yearly rate and write curve tables with 95% bands
    Fit(FitArgs),
    /// Exact conditional test for a rate change after a given year
    Test(TestArgs),
    /// Draw a synthetic annual series from a specified rate function
    Simulate(SimulateArgs),
    /// Dump basis values and the design matrix for inspection
    Basis(BasisArgs),
}

#[derive(Args)]
struct SeriesOpts {
    /// Input CSV with header `year,count`, one row per year
    #[arg(long)]
    input: PathBuf,
    /// First year of the study period (inclusive)
    #[arg(long)]
    start_year: i64,
    /// Last year of the study period (inclusive)
    #[arg(long)]
    end_year: i64,
}

#[derive(Args)]
struct OutputOpts {
    /// Directory for the output files (created if missing)
    #[arg(long)]
    output_dir: PathBuf,
    /// Output file format
    #[arg(long, value_enum, default_value_t = EmitFormat::Csv)]
    format: EmitFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmitFormat {
    Csv,
    Json,
}

impl EmitFormat {
    fn name(self) -> &'static str {
        match self {
            EmitFormat::Csv => "csv",
            EmitFormat::Json => "json",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    /// p = P(X > observed) under the null
    Strict,
    /// p = P(X >= observed) under the null
    Inclusive,
}

impl From<VariantArg> for TestVariant {
    fn from(variant: VariantArg) -> Self {
        match variant {
            VariantArg::Strict => TestVariant::Strict,
            VariantArg::Inclusive => TestVariant::Inclusive,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    series: SeriesOpts,
    /// Number of interior knots of the cubic spline basis
    #[arg(long, default_value_t = 9)]
    knots: usize,
    /// Number of evenly spaced output gridpoints over the study period
    #[arg(long, default_value_t = 1001)]
    grid_points: usize,
    /// Put the 95% band of the rate itself on the log scale (keeps it
    /// positive); derivative bands stay on the natural scale
    #[arg(long)]
    log_scale_bands: bool,
    #[command(flatten)]
    out: OutputOpts,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    series: SeriesOpts,
    /// Last year of the "before" segment; must lie strictly between the
    /// start and end years
    #[arg(long)]
    change_year: i64,
    /// Tail convention for the exact p-value
    #[arg(long, value_enum, default_value_t = VariantArg::Strict)]
    variant: VariantArg,
    #[command(flatten)]
    out: OutputOpts,
}

#[derive(Args)]
struct SimulateArgs {
    /// First year of the simulated period (inclusive)
    #[arg(long)]
    start_year: i64,
    /// Last year of the simulated period (inclusive)
    #[arg(long)]
    end_year: i64,
    /// RNG seed; with the seed recorded in the output, runs reproduce
    /// bitwise
    #[arg(long)]
    seed: u64,
    /// Constant events-per-year rate
    #[arg(long)]
    rate: Option<f64>,
    /// Step intensity: rate up to and including --change-year
    #[arg(long)]
    rate_before: Option<f64>,
    /// Step intensity: rate after --change-year
    #[arg(long)]
    rate_after: Option<f64>,
    /// Step intensity: last year at the old rate
    #[arg(long)]
    change_year: Option<i64>,
    /// Ramp intensity: rate at the start of the period
    #[arg(long)]
    start_rate: Option<f64>,
    /// Ramp intensity: rate at the end of the period
    #[arg(long)]
    end_rate: Option<f64>,
    /// Directory for the output file (created if missing)
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Args)]
struct BasisArgs {
    /// First year of the study period (inclusive)
    #[arg(long)]
    start_year: i64,
    /// Last year of the study period (inclusive)
    #[arg(long)]
    end_year: i64,
    /// Number of interior knots of the cubic spline basis
    #[arg(long, default_value_t = 9)]
    knots: usize,
    /// Number of evenly spaced gridpoints for the basis dumps
    #[arg(long, default_value_t = 1001)]
    grid_points: usize,
    #[command(flatten)]
    out: OutputOpts,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => run::run_fit(&args),
        Command::Test(args) => run::run_test(&args),
        Command::Simulate(args) => run::run_simulate(&args),
        Command::Basis(args) => run::run_basis(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::FAILURE
        }
    }
}
