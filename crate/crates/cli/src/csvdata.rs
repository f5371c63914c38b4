//! Reading the per-cell metrics CSVs back into memory.

use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub strategy: String,
    pub wps: Vec<f64>,
    pub round: usize,
    pub losses: Vec<f64>,
    pub test_accuracy: f64,
    pub empirical_risk: f64,
    pub ground_truth_risk: f64,
    pub generalization_error: f64,
    pub path_norm: f64,
    pub bound_variant: String,
    pub bound_value: Option<f64>,
    pub bound_holds: Option<bool>,
}

pub fn read_metrics_csv(path: &Path, clients: usize) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::data(format!("{}: empty file", path.display())))?;
    let expected = fednoise_core::metrics::csv_header(clients);
    if header != expected {
        return Err(CliError::data(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }

    let bad = |line: usize, what: &str| {
        CliError::data(format!("{} line {line}: bad {what}", path.display()))
    };
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 2 * clients + 10 {
            return Err(bad(lineno, "column count"));
        }
        let f = |i: usize, what: &str| -> Result<f64> {
            cols[i].parse().map_err(|_| bad(lineno, what))
        };
        let wps = (0..clients)
            .map(|k| f(2 + k, "wp"))
            .collect::<Result<Vec<_>>>()?;
        let losses = (0..clients)
            .map(|k| f(3 + clients + k, "loss"))
            .collect::<Result<Vec<_>>>()?;
        let base = 3 + 2 * clients;
        rows.push(MetricsRow {
            run_id: cols[0].to_string(),
            strategy: cols[1].to_string(),
            wps,
            round: cols[2 + clients].parse().map_err(|_| bad(lineno, "round"))?,
            losses,
            test_accuracy: f(base, "test_accuracy")?,
            empirical_risk: f(base + 1, "empirical_risk")?,
            ground_truth_risk: f(base + 2, "ground_truth_risk")?,
            generalization_error: f(base + 3, "generalization_error")?,
            path_norm: f(base + 4, "path_norm_proxy")?,
            bound_variant: cols[base + 5].to_string(),
            bound_value: if cols[base + 6].is_empty() {
                None
            } else {
                Some(f(base + 6, "bound_value")?)
            },
            bound_holds: match cols[base + 7] {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                _ => return Err(bad(lineno, "bound_holds")),
            },
        });
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}
