//! Plot-ready data tables extracted from a completed run.
//!
//! Selectors follow the experiment views: the path-norm growth curves
//! (per strategy and per depth), the two-client accuracy surface and its
//! regression line, loss/accuracy convergence per noise level, and the
//! final-accuracy-vs-noise comparison across strategies.

use std::path::{Path, PathBuf};

use fednoise_core::metrics::fit_accuracy_vs_noise;

use crate::csvdata::{read_metrics_csv, MetricsRow};
use crate::error::{CliError, Result};
use crate::manifest::{CellEntry, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Path norm vs round, one series per strategy.
    PathNormByStrategy,
    /// Path norm vs round, one series per network depth (log columns).
    PathNormByDepth,
    /// Final accuracy over the 2-client noise grid.
    AccuracySurface,
    /// Accuracy with the fitted regression plane.
    RegressionLine,
    /// Training loss vs round per noise level.
    LossConvergence,
    /// Test accuracy vs round per noise level.
    AccuracyConvergence,
    /// Final accuracy vs noise level per strategy.
    StrategyComparison,
}

impl Figure {
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "fig3a" | "pathnorm-strategy" => Ok(Figure::PathNormByStrategy),
            "fig3b" | "pathnorm-depth" => Ok(Figure::PathNormByDepth),
            "fig4" | "surface" => Ok(Figure::AccuracySurface),
            "fig5" | "regression" => Ok(Figure::RegressionLine),
            "fig6" | "loss" => Ok(Figure::LossConvergence),
            "fig7" | "accuracy" => Ok(Figure::AccuracyConvergence),
            "fig8" | "comparison" => Ok(Figure::StrategyComparison),
            other => Err(CliError::config(format!(
                "unknown figure id {other:?} (expected fig3a, fig3b, fig4, fig5, fig6, fig7, or fig8)"
            ))),
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Figure::PathNormByStrategy => "fig3a.csv",
            Figure::PathNormByDepth => "fig3b.csv",
            Figure::AccuracySurface => "fig4.csv",
            Figure::RegressionLine => "fig5.csv",
            Figure::LossConvergence => "fig6.csv",
            Figure::AccuracyConvergence => "fig7.csv",
            Figure::StrategyComparison => "fig8.csv",
        }
    }
}

struct LoadedCell<'a> {
    entry: &'a CellEntry,
    rows: Vec<MetricsRow>,
}

fn load_cells<'a>(
    manifest: &'a RunManifest,
    base: &Path,
    want: impl Fn(&CellEntry) -> bool,
) -> Result<Vec<LoadedCell<'a>>> {
    if manifest.cells.is_empty() {
        return Err(CliError::data("no cells in manifest"));
    }
    let selected: Vec<&CellEntry> = manifest.cells.iter().filter(|c| want(c)).collect();
    if selected.is_empty() {
        return Err(CliError::data("no cells match this figure selector"));
    }
    let missing: Vec<String> = selected
        .iter()
        .filter(|c| !c.completed || !base.join(&c.csv).exists())
        .map(|c| c.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::data(format!(
            "missing cell outputs: {}",
            missing.join(", ")
        )));
    }
    selected
        .into_iter()
        .map(|entry| {
            Ok(LoadedCell {
                rows: read_metrics_csv(&base.join(&entry.csv), manifest.clients)?,
                entry,
            })
        })
        .collect()
}

fn wp_cols(clients: usize) -> String {
    (1..=clients)
        .map(|k| format!("wp_{k}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn wp_vals(wps: &[f64]) -> String {
    wps.iter()
        .map(|w| format!("{w}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Builds the data table for `figure` and writes it under `out_dir`
/// (default: `<manifest dir>/fig/`). Returns the written path.
pub fn emit_figure_data(
    manifest_path: &Path,
    figure: Figure,
    out_dir: Option<&Path>,
) -> Result<PathBuf> {
    let manifest = RunManifest::load(manifest_path)?;
    let base = RunManifest::base_dir(manifest_path);
    let clients = manifest.clients;

    let mut table = String::new();
    match figure {
        Figure::PathNormByStrategy => {
            let cells = load_cells(&manifest, &base, |c| c.depth.is_none())?;
            table.push_str(&format!(
                "strategy,{},round,path_norm,log10_round,log10_path_norm\n",
                wp_cols(clients)
            ));
            for cell in cells {
                for row in &cell.rows {
                    table.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        cell.entry.strategy,
                        wp_vals(&cell.entry.wps),
                        row.round,
                        row.path_norm,
                        (row.round as f64).log10(),
                        row.path_norm.log10(),
                    ));
                }
            }
        }
        Figure::PathNormByDepth => {
            let cells = load_cells(&manifest, &base, |c| c.depth.is_some())?;
            table.push_str("depth,round,path_norm,log10_round,log10_path_norm\n");
            for cell in cells {
                for row in &cell.rows {
                    table.push_str(&format!(
                        "{},{},{},{},{}\n",
                        cell.entry.depth.unwrap(),
                        row.round,
                        row.path_norm,
                        (row.round as f64).log10(),
                        row.path_norm.log10(),
                    ));
                }
            }
        }
        Figure::AccuracySurface => {
            if clients != 2 {
                return Err(CliError::config(
                    "the accuracy surface needs a 2-client sweep",
                ));
            }
            let cells = load_cells(&manifest, &base, |c| c.depth.is_none())?;
            table.push_str("strategy,wp_1,wp_2,final_accuracy\n");
            for cell in cells {
                let last = cell.rows.last().unwrap();
                table.push_str(&format!(
                    "{},{},{},{}\n",
                    cell.entry.strategy,
                    cell.entry.wps[0],
                    cell.entry.wps[1],
                    last.test_accuracy
                ));
            }
        }
        Figure::RegressionLine => {
            let cells = load_cells(&manifest, &base, |c| c.depth.is_none())?;
            let points: Vec<(Vec<f64>, f64)> = cells
                .iter()
                .map(|c| (c.entry.wps.clone(), c.rows.last().unwrap().test_accuracy))
                .collect();
            let fit = fit_accuracy_vs_noise(&points)
                .map_err(|e| CliError::data(format!("regression over cells: {e}")))?;
            table.push_str(&format!(
                "# coefficients = {:?}, r_squared = {}\n",
                fit.coefficients, fit.r_squared
            ));
            table.push_str(&format!(
                "strategy,{},final_accuracy,fitted_accuracy\n",
                wp_cols(clients)
            ));
            for cell in cells {
                let acc = cell.rows.last().unwrap().test_accuracy;
                let fitted = fit.coefficients[0]
                    + cell
                        .entry
                        .wps
                        .iter()
                        .zip(&fit.coefficients[1..])
                        .map(|(w, b)| w * b)
                        .sum::<f64>();
                table.push_str(&format!(
                    "{},{},{},{}\n",
                    cell.entry.strategy,
                    wp_vals(&cell.entry.wps),
                    acc,
                    fitted
                ));
            }
        }
        Figure::LossConvergence => {
            let cells = load_cells(&manifest, &base, |c| c.depth.is_none())?;
            let loss_cols = (1..=clients)
                .map(|k| format!("loss_{k}"))
                .collect::<Vec<_>>()
                .join(",");
            table.push_str(&format!(
                "strategy,{},round,{loss_cols},mean_loss\n",
                wp_cols(clients)
            ));
            for cell in cells {
                for row in &cell.rows {
                    let mean = row.losses.iter().sum::<f64>() / row.losses.len() as f64;
                    table.push_str(&format!(
                        "{},{},{},{},{}\n",
                        cell.entry.strategy,
                        wp_vals(&cell.entry.wps),
                        row.round,
                        row.losses
                            .iter()
                            .map(|l| format!("{l}"))
                            .collect::<Vec<_>>()
                            .join(","),
                        mean
                    ));
                }
            }
        }
        Figure::AccuracyConvergence => {
            let cells = load_cells(&manifest, &base, |c| c.depth.is_none())?;
            table.push_str(&format!(
                "strategy,{},round,test_accuracy\n",
                wp_cols(clients)
            ));
            for cell in cells {
                for row in &cell.rows {
                    table.push_str(&format!(
                        "{},{},{},{}\n",
                        cell.entry.strategy,
                        wp_vals(&cell.entry.wps),
                        row.round,
                        row.test_accuracy
                    ));
                }
            }
        }
        Figure::StrategyComparison => {
            let cells = load_cells(&manifest, &base, |c| c.depth.is_none())?;
            table.push_str(&format!(
                "strategy,{},final_accuracy\n",
                wp_cols(clients)
            ));
            for cell in cells {
                table.push_str(&format!(
                    "{},{},{}\n",
                    cell.entry.strategy,
                    wp_vals(&cell.entry.wps),
                    cell.rows.last().unwrap().test_accuracy
                ));
            }
        }
    }

    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| base.join("fig"));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(figure.file_name());
    std::fs::write(&path, table)?;
    Ok(path)
}
