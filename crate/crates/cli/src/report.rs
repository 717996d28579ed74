//! Console table rendering and CSV writers for command outputs.

use std::path::Path;

use softsensor_core::data::{ColumnMapping, SummaryStats, Variable};
use softsensor_core::metrics::EvaluationReport;

use crate::{CliError, CliResult};

/// Print a fixed-width table with a header row.
pub fn print_table(headers: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.len());
            }
        }
    }
    let line = |cells: Vec<String>| {
        let joined: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<width$}", width = widths[i]))
            .collect();
        println!("{}", joined.join("  "));
    };
    line(headers.iter().map(|h| h.to_string()).collect());
    line(widths.iter().map(|w| "-".repeat(*w)).collect());
    for row in rows {
        line(row.clone());
    }
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

pub fn summary_rows(stats: &SummaryStats<f64>, mapping: &ColumnMapping) -> Vec<Vec<String>> {
    stats
        .columns
        .iter()
        .map(|c| {
            vec![
                c.variable.to_string(),
                mapping.unit(c.variable).unwrap_or("-").to_string(),
                c.n.to_string(),
                fmt4(c.mean),
                fmt4(c.sd),
                fmt4(c.min),
                fmt4(c.max),
            ]
        })
        .collect()
}

pub fn write_summary_csv(
    stats: &SummaryStats<f64>,
    mapping: &ColumnMapping,
    path: &Path,
) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(core_csv)?;
    w.write_record(["variable", "unit", "n", "mean", "sd", "min", "max"])
        .map_err(core_csv)?;
    for c in &stats.columns {
        w.write_record([
            c.variable.to_string(),
            mapping.unit(c.variable).unwrap_or("-").to_string(),
            c.n.to_string(),
            format!("{}", c.mean),
            format!("{}", c.sd),
            format!("{}", c.min),
            format!("{}", c.max),
        ])
        .map_err(core_csv)?;
    }
    w.flush().map_err(|e| CliError::Core(e.into()))?;
    Ok(())
}

pub fn write_correlation_csv(table: &[(Variable, f64)], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(core_csv)?;
    w.write_record(["rank", "predictor", "r"]).map_err(core_csv)?;
    for (rank, (var, r)) in table.iter().enumerate() {
        w.write_record([(rank + 1).to_string(), var.to_string(), format!("{r}")])
            .map_err(core_csv)?;
    }
    w.flush().map_err(|e| CliError::Core(e.into()))?;
    Ok(())
}

pub fn evaluation_rows(reports: &[EvaluationReport<f64>]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.n.to_string(),
                fmt4(r.rmse),
                fmt4(r.rmse_sd),
                format!("{:.2}", r.nrmse_pct),
                format!("{:.2}", r.pbias_pct),
            ]
        })
        .collect()
}

pub fn write_evaluation_csv(reports: &[EvaluationReport<f64>], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(core_csv)?;
    w.write_record(["model", "n", "rmse", "rmse_sd", "nrmse_pct", "pbias_pct"])
        .map_err(core_csv)?;
    for r in reports {
        w.write_record([
            r.model.clone(),
            r.n.to_string(),
            format!("{}", r.rmse),
            format!("{}", r.rmse_sd),
            format!("{}", r.nrmse_pct),
            format!("{}", r.pbias_pct),
        ])
        .map_err(core_csv)?;
    }
    w.flush().map_err(|e| CliError::Core(e.into()))?;
    Ok(())
}

fn core_csv(e: csv::Error) -> CliError {
    CliError::Core(e.into())
}
