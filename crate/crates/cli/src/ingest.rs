//! CSV ingestion for annual count series.
//!
//! Input format: UTF-8 CSV with the exact header `year,count`, one row per
//! year, `#` comment lines allowed, LF or CRLF line endings. The rows must
//! cover every year of the study period exactly once; validation errors
//! name the offending line.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use csv::{ReaderBuilder, Trim};
use nhpp_core::{CountSeries, StudyPeriod};

/// Reads a `year,count` CSV covering exactly `start_year..=end_year` and
/// returns the series over the period `(start_year, end_year + 1]` with
/// one-year bins.
pub fn ingest(path: &Path, start_year: i64, end_year: i64) -> Result<CountSeries> {
    if start_year >= end_year {
        bail!("--start-year must be strictly less than --end-year (got {start_year} and {end_year})");
    }
    let mut reader = ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open input file {}", path.display()))?;

    let headers = reader
        .headers()
        .with_context(|| format!("cannot read the CSV header of {}", path.display()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "year" || &headers[1] != "count" {
        bail!(
            "input header must be exactly `year,count`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        );
    }

    // year -> (count, line it was first seen on)
    let mut by_year: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for record in reader.records() {
        let record = record.context("malformed CSV record")?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            bail!(
                "line {line}: expected two fields `year,count`, found {}",
                record.len()
            );
        }
        let year: i64 = record[0]
            .parse()
            .map_err(|_| anyhow!("line {line}: year `{}` is not an integer", &record[0]))?;
        let count: u64 = record[1].parse().map_err(|_| {
            anyhow!(
                "line {line}: count `{}` is not a non-negative integer",
                &record[1]
            )
        })?;
        if year < start_year || year > end_year {
            bail!("line {line}: year {year} lies outside the study period {start_year}..={end_year}");
        }
        if let Some((_, first_line)) = by_year.get(&year) {
            bail!("line {line}: duplicate year {year} (first given on line {first_line})");
        }
        by_year.insert(year, (count, line));
    }

    let mut counts = Vec::with_capacity((end_year - start_year + 1) as usize);
    for year in start_year..=end_year {
        match by_year.get(&year) {
            Some((count, _)) => counts.push(*count),
            None => bail!(
                "missing year {year}: {} must contain every year {start_year}..={end_year} exactly once",
                path.display()
            ),
        }
    }

    let n_bins = counts.len();
    let period = StudyPeriod::new(start_year as f64, (end_year + 1) as f64, n_bins)
        .context("study period is not valid")?;
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("series")
        .to_string();
    Ok(CountSeries::new(period, counts, label)?)
}
