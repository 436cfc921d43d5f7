//! Output emission: atomic file writes, full-precision float formatting,
//! and the resolved-configuration header embedded in every artifact so a
//! result can be reproduced from its outputs alone.

use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use nhpp_core::inference::CurveEstimate;
use serde_json::{json, Map, Value};

/// Full double precision: 17 significant digits round-trip `f64` exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Ordered key/value description of a fully resolved run configuration.
///
/// Rendered as a `#`-comment block at the top of CSV outputs and as the
/// `config` object of JSON outputs.
#[derive(Debug, Clone)]
pub struct RunHeader {
    pairs: Vec<(&'static str, String)>,
}

impl RunHeader {
    pub fn new(command: &'static str) -> Self {
        RunHeader {
            pairs: vec![("command", command.to_string())],
        }
    }

    pub fn push(mut self, key: &'static str, value: impl ToString) -> Self {
        self.pairs.push((key, value.to_string()));
        self
    }

    pub fn comment_block(&self) -> String {
        let mut block = String::new();
        for (key, value) in &self.pairs {
            block.push_str(&format!("# {key}: {value}\n"));
        }
        block
    }

    pub fn json_value(&self) -> Value {
        let mut map = Map::new();
        for (key, value) in &self.pairs {
            map.insert((*key).to_string(), Value::String(value.clone()));
        }
        Value::Object(map)
    }
}

/// Writes `bytes` to `path` through a temporary file in the same
/// directory plus an atomic rename, so a failed run never leaves a
/// partial artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("cannot write {}", path.display()))?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("cannot move the finished file into place at {}", path.display()))?;
    Ok(())
}

fn csv_writer(header: &RunHeader) -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(header.comment_block().into_bytes())
}

fn finish_csv(writer: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    writer
        .into_inner()
        .context("cannot flush the CSV buffer")
}

fn finish_json(doc: &Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(doc).context("cannot serialize JSON")?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Curve table: `t, estimate, std_error, ci_low, ci_high`.
pub fn curve_csv(header: &RunHeader, curve: &CurveEstimate) -> Result<Vec<u8>> {
    let mut writer = csv_writer(header);
    writer.write_record(["t", "estimate", "std_error", "ci_low", "ci_high"])?;
    for i in 0..curve.grid.len() {
        writer.write_record([
            fmt_f64(curve.grid[i]),
            fmt_f64(curve.value[i]),
            fmt_f64(curve.std_error[i]),
            fmt_f64(curve.ci_low[i]),
            fmt_f64(curve.ci_high[i]),
        ])?;
    }
    finish_csv(writer)
}

pub fn curve_json(header: &RunHeader, curve: &CurveEstimate) -> Result<Vec<u8>> {
    let points: Vec<Value> = (0..curve.grid.len())
        .map(|i| {
            json!({
                "t": curve.grid[i],
                "estimate": curve.value[i],
                "std_error": curve.std_error[i],
                "ci_low": curve.ci_low[i],
                "ci_high": curve.ci_high[i],
            })
        })
        .collect();
    finish_json(&json!({
        "config": header.json_value(),
        "order": curve.order.order(),
        "points": points,
    }))
}

/// One labeled row per coefficient plus the scalar fit diagnostics.
pub struct FitSummary {
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub total_observed: u64,
    pub total_fitted: f64,
}

pub fn fit_summary_csv(header: &RunHeader, summary: &FitSummary) -> Result<Vec<u8>> {
    let scalars = header
        .clone()
        .push("converged", summary.converged)
        .push("iterations", summary.iterations)
        .push("log_likelihood", fmt_f64(summary.log_likelihood))
        .push("total_observed", summary.total_observed)
        .push("total_fitted", fmt_f64(summary.total_fitted));
    let mut writer = csv_writer(&scalars);
    writer.write_record(["index", "estimate", "std_error"])?;
    for (index, (est, se)) in summary
        .estimates
        .iter()
        .zip(&summary.std_errors)
        .enumerate()
    {
        writer.write_record([index.to_string(), fmt_f64(*est), fmt_f64(*se)])?;
    }
    finish_csv(writer)
}

pub fn fit_summary_json(header: &RunHeader, summary: &FitSummary) -> Result<Vec<u8>> {
    let coefficients: Vec<Value> = summary
        .estimates
        .iter()
        .zip(&summary.std_errors)
        .enumerate()
        .map(|(index, (est, se))| json!({"index": index, "estimate": est, "std_error": se}))
        .collect();
    finish_json(&json!({
        "config": header.json_value(),
        "converged": summary.converged,
        "iterations": summary.iterations,
        "log_likelihood": summary.log_likelihood,
        "total_observed": summary.total_observed,
        "total_fitted": summary.total_fitted,
        "coefficients": coefficients,
    }))
}

/// Change-point test report fields, already resolved for emission.
pub struct TestReport {
    pub k: usize,
    pub n_bins: usize,
    pub sum_before: u64,
    pub sum_after: u64,
    pub sum_total: u64,
    pub mean_before: f64,
    pub mean_after: f64,
    pub null_probability: f64,
    pub variant: &'static str,
    pub p_value: f64,
    pub reject_at_level_0_05: bool,
}

pub fn test_report_csv(header: &RunHeader, report: &TestReport) -> Result<Vec<u8>> {
    let mut writer = csv_writer(header);
    writer.write_record([
        "k",
        "n_bins",
        "sum_before",
        "sum_after",
        "sum_total",
        "mean_before",
        "mean_after",
        "null_probability",
        "variant",
        "p_value",
        "reject_at_level_0_05",
    ])?;
    writer.write_record([
        report.k.to_string(),
        report.n_bins.to_string(),
        report.sum_before.to_string(),
        report.sum_after.to_string(),
        report.sum_total.to_string(),
        fmt_f64(report.mean_before),
        fmt_f64(report.mean_after),
        fmt_f64(report.null_probability),
        report.variant.to_string(),
        fmt_f64(report.p_value),
        report.reject_at_level_0_05.to_string(),
    ])?;
    finish_csv(writer)
}

pub fn test_report_json(header: &RunHeader, report: &TestReport) -> Result<Vec<u8>> {
    finish_json(&json!({
        "config": header.json_value(),
        "k": report.k,
        "n_bins": report.n_bins,
        "sum_before": report.sum_before,
        "sum_after": report.sum_after,
        "sum_total": report.sum_total,
        "mean_before": report.mean_before,
        "mean_after": report.mean_after,
        "null_probability": report.null_probability,
        "variant": report.variant,
        "p_value": report.p_value,
        "reject_at_level_0_05": report.reject_at_level_0_05,
    }))
}

/// Synthetic series in the ingestion format (`year,count`), so the file
/// round-trips through `ingest` losslessly.
pub fn counts_csv(header: &RunHeader, start_year: i64, counts: &[u64]) -> Result<Vec<u8>> {
    let mut writer = csv_writer(header);
    writer.write_record(["year", "count"])?;
    for (offset, count) in counts.iter().enumerate() {
        writer.write_record([
            (start_year + offset as i64).to_string(),
            count.to_string(),
        ])?;
    }
    finish_csv(writer)
}

/// Wide numeric table: one leading label column then one column per basis
/// function.
pub fn matrix_csv(
    header: &RunHeader,
    label_column: &str,
    labels: &[String],
    rows: &[Vec<f64>],
) -> Result<Vec<u8>> {
    let num_basis = rows.first().map_or(0, Vec::len);
    let mut writer = csv_writer(header);
    let mut columns = vec![label_column.to_string()];
    columns.extend((0..num_basis).map(|l| format!("b{l}")));
    writer.write_record(&columns)?;
    for (label, row) in labels.iter().zip(rows) {
        let mut record = vec![label.clone()];
        record.extend(row.iter().map(|&v| fmt_f64(v)));
        writer.write_record(&record)?;
    }
    finish_csv(writer)
}

pub fn matrix_json(
    header: &RunHeader,
    label_column: &str,
    labels: &[String],
    rows: &[Vec<f64>],
) -> Result<Vec<u8>> {
    let entries: Vec<Value> = labels
        .iter()
        .zip(rows)
        .map(|(label, row)| json!({label_column: label, "values": row}))
        .collect();
    finish_json(&json!({
        "config": header.json_value(),
        "rows": entries,
    }))
}
