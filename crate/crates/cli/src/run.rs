//! Drivers for the four subcommands: each one assembles the inputs,
//! calls into the library, and emits the artifacts atomically.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nhpp_core::changepoint;
use nhpp_core::inference::{self, BandScale};
use nhpp_core::model::{self, FitOptions};
use nhpp_core::simulate::{self, IntensitySpec, RNG_ALGORITHM};
use nhpp_core::{Deriv, SplineBasis, StudyPeriod};

use crate::ingest::ingest;
use crate::output::{self, FitSummary, RunHeader, TestReport};
use crate::{BasisArgs, EmitFormat, FitArgs, SimulateArgs, TestArgs};

const KNOT_HINT: &str =
    "cannot build the spline basis: interior knots + 4 basis functions must not exceed the number of years; reduce --knots";

fn period_for(start_year: i64, end_year: i64) -> Result<StudyPeriod> {
    if start_year >= end_year {
        bail!("--start-year must be strictly less than --end-year (got {start_year} and {end_year})");
    }
    let n_bins = (end_year - start_year + 1) as usize;
    StudyPeriod::new(start_year as f64, (end_year + 1) as f64, n_bins)
        .context("study period is not valid")
}

/// Evenly spaced grid over the closed study period, endpoints included.
fn grid_over(period: &StudyPeriod, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        bail!("--grid-points must be at least 2 (got {points})");
    }
    let (a, b) = (period.start(), period.end());
    Ok((0..points)
        .map(|i| {
            if i == points - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (points - 1) as f64
            }
        })
        .collect())
}

fn emit(dir: &Path, stem: &str, format: EmitFormat, bytes: &[u8]) -> Result<()> {
    output::write_atomic(&dir.join(format!("{stem}.{}", format.name())), bytes)
}

pub fn run_fit(args: &FitArgs) -> Result<()> {
    let series = ingest(&args.series.input, args.series.start_year, args.series.end_year)?;
    let period = *series.period();
    let basis = SplineBasis::uniform(&period, args.knots).context(KNOT_HINT)?;
    let design = model::build_design(&basis, &period)?;
    let fit = model::fit_mle(&design, &series, &FitOptions::default())
        .context("maximum-likelihood fit failed; consider fewer --knots or check the input series")?;
    let grid = grid_over(&period, args.grid_points)?;
    fs::create_dir_all(&args.out.output_dir)
        .with_context(|| format!("cannot create {}", args.out.output_dir.display()))?;

    let base = |content: &'static str| {
        RunHeader::new("fit")
            .push("content", content)
            .push("input", args.series.input.display())
            .push("series", series.label())
            .push("start_year", args.series.start_year)
            .push("end_year", args.series.end_year)
            .push("n_bins", period.n_bins())
            .push("interior_knots", args.knots)
            .push("num_basis", basis.num_basis())
            .push("grid_points", args.grid_points)
            .push("format", args.out.format.name())
    };

    let curves = [
        (Deriv::Value, "intensity"),
        (Deriv::First, "intensity_first_derivative"),
        (Deriv::Second, "intensity_second_derivative"),
    ];
    for (order, stem) in curves {
        let scale = if args.log_scale_bands && order == Deriv::Value {
            BandScale::Log
        } else {
            BandScale::Natural
        };
        let curve = inference::intensity_with_bands(&fit, &basis, &grid, order, scale)?;
        let header = base(stem)
            .push("order", order.order())
            .push(
                "band_scale",
                if scale == BandScale::Log { "log" } else { "natural" },
            );
        let bytes = match args.out.format {
            EmitFormat::Csv => output::curve_csv(&header, &curve)?,
            EmitFormat::Json => output::curve_json(&header, &curve)?,
        };
        emit(&args.out.output_dir, stem, args.out.format, &bytes)?;
    }

    let summary = FitSummary {
        estimates: fit.beta_hat.clone(),
        std_errors: fit.beta_std_errors(),
        log_likelihood: fit.log_likelihood,
        iterations: fit.iterations,
        converged: fit.converged,
        total_observed: series.total(),
        total_fitted: fit.fitted_means.iter().sum(),
    };
    let header = base("fit_summary");
    let bytes = match args.out.format {
        EmitFormat::Csv => output::fit_summary_csv(&header, &summary)?,
        EmitFormat::Json => output::fit_summary_json(&header, &summary)?,
    };
    emit(&args.out.output_dir, "fit_summary", args.out.format, &bytes)
}

pub fn run_test(args: &TestArgs) -> Result<()> {
    let series = ingest(&args.series.input, args.series.start_year, args.series.end_year)?;
    if !(args.change_year > args.series.start_year && args.change_year < args.series.end_year) {
        bail!(
            "--change-year must lie strictly between --start-year and --end-year (got {} outside {}..{})",
            args.change_year,
            args.series.start_year,
            args.series.end_year
        );
    }
    let k = (args.change_year - args.series.start_year + 1) as usize;
    let result = changepoint::exact_test(&series, k, args.variant.into())?;
    fs::create_dir_all(&args.out.output_dir)
        .with_context(|| format!("cannot create {}", args.out.output_dir.display()))?;

    let header = RunHeader::new("test")
        .push("content", "change_point_test")
        .push("input", args.series.input.display())
        .push("series", series.label())
        .push("start_year", args.series.start_year)
        .push("end_year", args.series.end_year)
        .push("n_bins", result.n_bins)
        .push("change_year", args.change_year)
        .push("k", result.k)
        .push("variant", result.variant.name())
        .push("level", "0.05")
        .push("format", args.out.format.name());
    let report = TestReport {
        k: result.k,
        n_bins: result.n_bins,
        sum_before: result.sum_before,
        sum_after: result.sum_after(),
        sum_total: result.sum_total,
        mean_before: result.mean_before(),
        mean_after: result.mean_after(),
        null_probability: result.null_probability,
        variant: result.variant.name(),
        p_value: result.p_value,
        reject_at_level_0_05: result.p_value <= 0.05,
    };
    let bytes = match args.out.format {
        EmitFormat::Csv => output::test_report_csv(&header, &report)?,
        EmitFormat::Json => output::test_report_json(&header, &report)?,
    };
    emit(
        &args.out.output_dir,
        "change_point_test",
        args.out.format,
        &bytes,
    )
}

pub fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let period = period_for(args.start_year, args.end_year)?;
    let constant_given = args.rate.is_some();
    let step_given =
        args.rate_before.is_some() || args.rate_after.is_some() || args.change_year.is_some();
    let ramp_given = args.start_rate.is_some() || args.end_rate.is_some();

    let mut header = RunHeader::new("simulate")
        .push("content", "simulated_counts")
        .push("start_year", args.start_year)
        .push("end_year", args.end_year)
        .push("n_bins", period.n_bins());
    let spec = match (constant_given, step_given, ramp_given) {
        (true, false, false) => {
            let rate = args.rate.unwrap();
            header = header.push("intensity", "constant").push("rate", rate);
            IntensitySpec::constant(period, rate)?
        }
        (false, true, false) => {
            let (Some(before), Some(after), Some(change_year)) =
                (args.rate_before, args.rate_after, args.change_year)
            else {
                bail!("a step intensity needs all of --rate-before, --rate-after and --change-year");
            };
            if !(change_year > args.start_year && change_year < args.end_year) {
                bail!(
                    "--change-year must lie strictly between --start-year and --end-year (got {change_year} outside {}..{})",
                    args.start_year,
                    args.end_year
                );
            }
            header = header
                .push("intensity", "step")
                .push("rate_before", before)
                .push("rate_after", after)
                .push("change_year", change_year);
            // The rate changes once the change year is over, i.e. at the
            // right edge of its bin.
            IntensitySpec::step(period, before, after, (change_year + 1) as f64)?
        }
        (false, false, true) => {
            let (Some(start_rate), Some(end_rate)) = (args.start_rate, args.end_rate) else {
                bail!("a ramp intensity needs both --start-rate and --end-rate");
            };
            header = header
                .push("intensity", "ramp")
                .push("start_rate", start_rate)
                .push("end_rate", end_rate);
            IntensitySpec::ramp(period, start_rate, end_rate)?
        }
        _ => bail!(
            "choose exactly one intensity: --rate (constant), --rate-before/--rate-after/--change-year (step), or --start-rate/--end-rate (ramp)"
        ),
    };
    header = header
        .push("seed", args.seed)
        .push("rng", RNG_ALGORITHM)
        .push("format", "csv");

    let series = simulate::simulate_counts(&spec, args.seed);
    fs::create_dir_all(&args.output_dir)
        .with_context(|| format!("cannot create {}", args.output_dir.display()))?;
    let bytes = output::counts_csv(&header, args.start_year, series.counts())?;
    output::write_atomic(&args.output_dir.join("simulated_counts.csv"), &bytes)
}

pub fn run_basis(args: &BasisArgs) -> Result<()> {
    let period = period_for(args.start_year, args.end_year)?;
    let basis = SplineBasis::uniform(&period, args.knots).context(KNOT_HINT)?;
    let design = model::build_design(&basis, &period)?;
    let grid = grid_over(&period, args.grid_points)?;
    fs::create_dir_all(&args.out.output_dir)
        .with_context(|| format!("cannot create {}", args.out.output_dir.display()))?;

    let base = |content: &'static str| {
        RunHeader::new("basis")
            .push("content", content)
            .push("start_year", args.start_year)
            .push("end_year", args.end_year)
            .push("n_bins", period.n_bins())
            .push("interior_knots", args.knots)
            .push("num_basis", basis.num_basis())
            .push("grid_points", args.grid_points)
            .push("format", args.out.format.name())
    };

    let year_labels: Vec<String> = (0..period.n_bins())
        .map(|n| (args.start_year + n as i64).to_string())
        .collect();
    let design_rows: Vec<Vec<f64>> = (0..period.n_bins()).map(|n| design.row(n).to_vec()).collect();
    let header = base("design_matrix");
    let bytes = match args.out.format {
        EmitFormat::Csv => output::matrix_csv(&header, "year", &year_labels, &design_rows)?,
        EmitFormat::Json => output::matrix_json(&header, "year", &year_labels, &design_rows)?,
    };
    emit(&args.out.output_dir, "design_matrix", args.out.format, &bytes)?;

    let t_labels: Vec<String> = grid.iter().map(|&t| output::fmt_f64(t)).collect();
    let dumps = [
        (Deriv::Value, "basis_values"),
        (Deriv::First, "basis_first_derivatives"),
        (Deriv::Second, "basis_second_derivatives"),
    ];
    for (order, stem) in dumps {
        let rows: Vec<Vec<f64>> = grid
            .iter()
            .map(|&t| basis.eval(t, order))
            .collect::<Result<_, _>>()?;
        let header = base(stem).push("order", order.order());
        let bytes = match args.out.format {
            EmitFormat::Csv => output::matrix_csv(&header, "t", &t_labels, &rows)?,
            EmitFormat::Json => output::matrix_json(&header, "t", &t_labels, &rows)?,
        };
        emit(&args.out.output_dir, stem, args.out.format, &bytes)?;
    }
    Ok(())
}
