//! Sweep orchestration: one training cell per (noise vector, strategy,
//! depth), each individually seeded, with per-cell CSV output, a
//! sweep-level summary, an accuracy-vs-noise regression fit, and a run
//! manifest.
//!
//! Cells whose output file already exists are not recomputed, so deleting
//! a single cell CSV and re-running regenerates exactly that cell.

use std::path::{Path, PathBuf};
use std::time::Instant;

use fednoise_core::data::{
    inject_label_noise, load_idx, partition_iid, synthetic_blobs, two_class_grid_fractions,
    GridWorld, LabeledDataset,
};
use fednoise_core::federation::{
    mix_seed, run_round, ClientState, FederationConfig, ServerState, Strategy,
};
use fednoise_core::metrics::{
    accuracy_on, csv_header, csv_row, dataset_risks, empirical_risk_world, fit_accuracy_vs_noise,
    ground_truth_risk_world, shard_weights, theorem_bound, world_accuracy, OmegaVariant,
    RoundMetrics,
};
use fednoise_core::nn::{write_snapshot, ReluMlp};
use rayon::prelude::*;

use crate::csvdata::read_metrics_csv;
use crate::error::{CliError, Result};
use crate::manifest::{CellEntry, RunManifest, MANIFEST_FILE};
use crate::spec::{DatasetSource, ExperimentSpec, OmegaTag};

// Tags for deterministic sub-seed derivation.
const DATA_TAG: u64 = 1;
const INIT_TAG: u64 = 2;
const NOISE_TAG: u64 = 3;
const GRID_TAG: u64 = 4;
const PARTITION_TAG: u64 = 5;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REGRESSION_FILE: &str = "regression.json";

/// One planned training cell.
#[derive(Debug, Clone)]
pub struct CellPlan {
    pub id: String,
    pub strategy: Strategy,
    pub wps: Vec<f64>,
    pub depth: Option<usize>,
    pub layer_dims: Vec<usize>,
    /// Cell-identity seed; the per-client noise streams derive from it.
    pub seed: u64,
    pub csv_name: String,
    pub log_name: String,
}

fn wp_key(wps: &[f64]) -> String {
    wps.iter()
        .map(|w| format!("{w}"))
        .collect::<Vec<_>>()
        .join("-")
}

/// Enumerates the sweep cells in deterministic order. Cell seeds depend
/// only on the master seed and the noise vector, so every strategy (and
/// depth) sees identical noisy shards for a given noise cell.
pub fn plan_cells(spec: &ExperimentSpec) -> Vec<CellPlan> {
    let depths: Vec<Option<usize>> = if spec.depth_grid.is_empty() {
        vec![None]
    } else {
        spec.depth_grid.iter().map(|&d| Some(d)).collect()
    };
    let mut cells = Vec::new();
    for &strategy in &spec.strategies {
        for wps in &spec.noise_cells {
            for &depth in &depths {
                let mut id = format!("{}_wp{}", strategy.name(), wp_key(wps));
                if let Some(d) = depth {
                    id.push_str(&format!("_L{d}"));
                }
                let mut seed_parts = vec![spec.master_seed, NOISE_TAG];
                seed_parts.extend(wps.iter().map(|w| w.to_bits()));
                cells.push(CellPlan {
                    id: id.clone(),
                    strategy,
                    wps: wps.clone(),
                    depth,
                    layer_dims: depth
                        .map(|d| spec.dims_for_depth(d))
                        .unwrap_or_else(|| spec.layer_dims.clone()),
                    seed: mix_seed(&seed_parts),
                    csv_name: format!("cell_{id}.csv"),
                    log_name: format!("cell_{id}.log"),
                });
            }
        }
    }
    cells
}

/// Clean data shared by every cell of a dataset-backed sweep.
pub struct BaseData {
    pub shards: Vec<LabeledDataset>,
    pub test: LabeledDataset,
    test_aug: ndarray::Array2<f64>,
}

/// Loads (or generates) the clean train/test data and partitions the
/// train set into IID shards. Grid-world sweeps need no base data.
pub fn load_base_data(spec: &ExperimentSpec) -> Result<Option<BaseData>> {
    let (train, test) = match &spec.dataset {
        DatasetSource::GridWorld => return Ok(None),
        DatasetSource::Blobs => {
            let dim = spec.layer_dims[0] - 1;
            let classes = *spec.layer_dims.last().unwrap();
            synthetic_blobs(
                spec.limit.expect("validated at parse"),
                spec.test_limit.expect("validated at parse"),
                dim,
                classes,
                mix_seed(&[spec.master_seed, DATA_TAG]),
            )?
        }
        DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let train = load_idx(train_images, train_labels, spec.limit)
                .map_err(|e| CliError::data(e.to_string()))?;
            let test = load_idx(test_images, test_labels, spec.test_limit)
                .map_err(|e| CliError::data(e.to_string()))?;
            (train, test)
        }
    };
    if train.feature_dim() + 1 != spec.layer_dims[0] {
        return Err(CliError::config(format!(
            "train features have dim {} but layer_dims starts at {}",
            train.feature_dim(),
            spec.layer_dims[0]
        )));
    }
    if train.class_count() != *spec.layer_dims.last().unwrap() {
        return Err(CliError::config(format!(
            "dataset has {} classes but layer_dims ends at {}",
            train.class_count(),
            spec.layer_dims.last().unwrap()
        )));
    }
    if train.len() < spec.clients {
        return Err(CliError::data(format!(
            "{} training examples cannot cover {} clients",
            train.len(),
            spec.clients
        )));
    }
    let shards = partition_iid(
        &train,
        spec.clients,
        mix_seed(&[spec.master_seed, PARTITION_TAG]),
    )?;
    let test_aug = test.augmented();
    Ok(Some(BaseData {
        shards,
        test,
        test_aug,
    }))
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn omega_for(spec: &ExperimentSpec, plan: &CellPlan, round: usize) -> OmegaVariant {
    match spec.omega_variant {
        OmegaTag::MeasuredOutput => OmegaVariant::MeasuredOutput,
        OmegaTag::PathNorm => OmegaVariant::PathNorm,
        OmegaTag::Polynomial => OmegaVariant::Polynomial {
            c0: spec.c0,
            round,
            epochs: spec.local_epochs,
            layers: plan.layer_dims.len() - 2,
        },
    }
}

/// Runs one cell end to end and writes its CSV, event log, and any
/// snapshots. Returns the final-round test accuracy.
pub fn run_cell(
    spec: &ExperimentSpec,
    plan: &CellPlan,
    base: Option<&BaseData>,
    out_dir: &Path,
) -> Result<f64> {
    let init_parts: Vec<u64> = std::iter::once(spec.master_seed)
        .chain(std::iter::once(INIT_TAG))
        .chain(plan.layer_dims.iter().map(|&d| d as u64))
        .collect();
    let global = ReluMlp::with_seed(&plan.layer_dims, mix_seed(&init_parts))
        .map_err(|e| CliError::config(e.to_string()))?;

    let cfg = FederationConfig {
        rounds: spec.rounds,
        global_lr: spec.global_lr,
        local_lr: spec.local_lr,
        batch_size: spec.batch_size,
        local_epochs: spec.local_epochs,
        strategy: plan.strategy,
        master_seed: spec.master_seed,
    };

    // Build the per-client training shards and the evaluation closure.
    let mut world: Option<GridWorld> = None;
    let mut clean_labels: Vec<Vec<usize>> = Vec::new();
    let mut clients: Vec<ClientState> = Vec::new();
    match base {
        Some(base) => {
            for (k, shard) in base.shards.iter().enumerate() {
                let noisy =
                    inject_label_noise(shard, plan.wps[k], mix_seed(&[plan.seed, k as u64]))?;
                clean_labels.push(shard.labels().to_vec());
                clients.push(ClientState::new(k, &noisy, &global, plan.strategy)?);
            }
        }
        None => {
            let w = two_class_grid_fractions(&plan.wps)?;
            for k in 0..spec.clients {
                let draws = w.sample(
                    k,
                    spec.samples_per_client,
                    mix_seed(&[spec.master_seed, GRID_TAG, k as u64]),
                )?;
                clients.push(ClientState::new(k, &draws, &global, plan.strategy)?);
            }
            world = Some(w);
        }
    }
    let weights = shard_weights(&clients.iter().map(ClientState::shard_size).collect::<Vec<_>>());

    let mut server = ServerState::new(global, plan.strategy);
    let mut csv = String::new();
    csv.push_str(&csv_header(spec.clients));
    csv.push('\n');
    let mut log = String::new();
    let mut last_accuracy = 0.0;
    let mut snapshots: Vec<(String, Vec<u8>)> = Vec::new();

    for _ in 0..spec.rounds {
        let started = Instant::now();
        let outcome = run_round(&mut server, &mut clients, &cfg)?;
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;

        let model = &server.global;
        let metrics = match &world {
            Some(w) => {
                let empirical = empirical_risk_world(model, w, &weights)?;
                let truth = ground_truth_risk_world(model, w, &weights)?;
                let bound = theorem_bound(model, w, &weights, omega_for(spec, plan, outcome.round))?;
                RoundMetrics {
                    round: outcome.round,
                    client_losses: outcome.client_losses.clone(),
                    test_accuracy: world_accuracy(model, w)?,
                    empirical_risk: empirical,
                    ground_truth_risk: truth,
                    generalization_error: (truth - empirical).abs(),
                    path_norm: model.path_norm_proxy(),
                    bound: Some(bound),
                }
            }
            None => {
                let base = base.expect("dataset cells carry base data");
                let shard_views: Vec<_> = clients
                    .iter()
                    .zip(&clean_labels)
                    .map(|(c, clean)| (c.features_aug(), c.labels(), clean.as_slice()))
                    .collect();
                let (empirical, truth) = dataset_risks(model, &shard_views, &weights)?;
                RoundMetrics {
                    round: outcome.round,
                    client_losses: outcome.client_losses.clone(),
                    test_accuracy: accuracy_on(model, base.test_aug.view(), base.test.labels())?,
                    empirical_risk: empirical,
                    ground_truth_risk: truth,
                    generalization_error: (truth - empirical).abs(),
                    path_norm: model.path_norm_proxy(),
                    bound: None,
                }
            }
        };
        last_accuracy = metrics.test_accuracy;
        csv.push_str(&csv_row(&plan.id, plan.strategy.name(), &plan.wps, &metrics));
        csv.push('\n');

        log.push_str(&format!(
            "{}\t{}\t{wall_ms:.3}\n",
            outcome.round,
            outcome
                .client_losses
                .iter()
                .map(|l| format!("{l}"))
                .collect::<Vec<_>>()
                .join("\t"),
        ));

        if spec.snapshot_every > 0 && outcome.round % spec.snapshot_every == 0 {
            let mut bytes = Vec::new();
            write_snapshot(model, &mut bytes).map_err(|e| CliError::Other(e.to_string()))?;
            snapshots.push((format!("cell_{}_round{}.rmlp", plan.id, outcome.round), bytes));
        }
    }

    std::fs::write(out_dir.join(&plan.log_name), log)?;
    for (name, bytes) in snapshots {
        atomic_write(&out_dir.join(name), &bytes)?;
    }
    atomic_write(&out_dir.join(&plan.csv_name), csv.as_bytes())?;
    Ok(last_accuracy)
}

/// Runs every missing cell of the sweep (up to `threads` at a time),
/// rebuilds the summary, regression fit, and manifest, and returns the
/// manifest with its path.
pub fn run_sweep(spec: &ExperimentSpec, threads: Option<usize>) -> Result<(RunManifest, PathBuf)> {
    let base = load_base_data(spec)?;
    let cells = plan_cells(spec);
    std::fs::create_dir_all(&spec.out_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }))
        .build()
        .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;

    let base_ref = base.as_ref();
    let results: Vec<(bool, Result<f64>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|plan| {
                let csv_path = spec.out_dir.join(&plan.csv_name);
                if csv_path.exists() {
                    let cached = read_metrics_csv(&csv_path, spec.clients)
                        .map(|rows| rows.last().unwrap().test_accuracy);
                    (true, cached)
                } else {
                    (false, run_cell(spec, plan, base_ref, &spec.out_dir))
                }
            })
            .collect()
    });

    let mut entries = Vec::with_capacity(cells.len());
    let mut final_accuracies = Vec::with_capacity(cells.len());
    let mut failures = Vec::new();
    for (plan, (_cached, result)) in cells.iter().zip(&results) {
        let completed = result.is_ok();
        match result {
            Ok(acc) => final_accuracies.push(Some(*acc)),
            Err(e) => {
                final_accuracies.push(None);
                failures.push(format!("cell {}: {e}", plan.id));
            }
        }
        entries.push(CellEntry {
            id: plan.id.clone(),
            strategy: plan.strategy.name().to_string(),
            wps: plan.wps.clone(),
            depth: plan.depth,
            seed: plan.seed,
            csv: plan.csv_name.clone(),
            completed,
        });
    }

    // Sweep summary: final accuracy per cell.
    let mut summary = String::from("cell,strategy,");
    summary.push_str(
        &(1..=spec.clients)
            .map(|k| format!("wp_{k}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    summary.push_str(",depth,final_accuracy\n");
    for (plan, acc) in cells.iter().zip(&final_accuracies) {
        let Some(acc) = acc else { continue };
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            plan.id,
            plan.strategy.name(),
            plan.wps
                .iter()
                .map(|w| format!("{w}"))
                .collect::<Vec<_>>()
                .join(","),
            plan.depth.map_or("-".to_string(), |d| d.to_string()),
            acc
        ));
    }
    atomic_write(&spec.out_dir.join(SUMMARY_FILE), summary.as_bytes())?;

    // Accuracy-vs-noise regression per strategy (skipped when the design
    // cannot support it, e.g. a single noise cell or a depth sweep).
    let mut fits = Vec::new();
    if spec.depth_grid.is_empty() {
        for &strategy in &spec.strategies {
            let points: Vec<(Vec<f64>, f64)> = cells
                .iter()
                .zip(&final_accuracies)
                .filter(|(plan, acc)| plan.strategy == strategy && acc.is_some())
                .map(|(plan, acc)| (plan.wps.clone(), acc.unwrap()))
                .collect();
            if points.len() >= spec.clients + 2 {
                if let Ok(fit) = fit_accuracy_vs_noise(&points) {
                    fits.push(serde_json::json!({
                        "strategy": strategy.name(),
                        "coefficients": fit.coefficients,
                        "r_squared": fit.r_squared,
                        "n_points": fit.n_points,
                    }));
                }
            }
        }
    }
    let regression = serde_json::json!({ "fits": fits });
    atomic_write(
        &spec.out_dir.join(REGRESSION_FILE),
        format!("{:#}\n", regression).as_bytes(),
    )?;

    let manifest = RunManifest {
        spec_hash: spec.spec_hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        name: spec.name.clone(),
        master_seed: spec.master_seed,
        clients: spec.clients,
        cells: entries,
        summary: SUMMARY_FILE.to_string(),
        regression: Some(REGRESSION_FILE.to_string()),
    };
    let manifest_path = spec.out_dir.join(MANIFEST_FILE);
    atomic_write(&manifest_path, manifest.render().as_bytes())?;

    if !failures.is_empty() {
        return Err(CliError::Other(format!(
            "{} cell(s) failed: {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    Ok((manifest, manifest_path))
}

/// Re-checks a completed run: CSV integrity, metric invariants, summary
/// consistency, and the recorded bound-holds flags.
pub fn verify_run(manifest_path: &Path) -> Result<VerifyReport> {
    let manifest = RunManifest::load(manifest_path)?;
    let base = RunManifest::base_dir(manifest_path);
    let mut failures = Vec::new();
    let mut rows_checked = 0usize;

    // summary final accuracies, keyed by cell id
    let summary_path = base.join(&manifest.summary);
    let summary_text = std::fs::read_to_string(&summary_path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", summary_path.display())))?;
    let mut summary_acc = std::collections::BTreeMap::new();
    for line in summary_text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != spec_summary_cols(manifest.clients) {
            failures.push(format!("summary: malformed line {line:?}"));
            continue;
        }
        match cols.last().unwrap().parse::<f64>() {
            Ok(acc) => {
                summary_acc.insert(cols[0].to_string(), acc);
            }
            Err(_) => failures.push(format!("summary: bad accuracy in {line:?}")),
        }
    }

    for cell in &manifest.cells {
        if !cell.completed {
            failures.push(format!("cell {}: marked failed in manifest", cell.id));
            continue;
        }
        let path = base.join(&cell.csv);
        if !path.exists() {
            failures.push(format!("cell {}: missing metrics file {}", cell.id, cell.csv));
            continue;
        }
        let rows = match read_metrics_csv(&path, manifest.clients) {
            Ok(rows) => rows,
            Err(e) => {
                failures.push(format!("cell {}: {e}", cell.id));
                continue;
            }
        };
        for (i, row) in rows.iter().enumerate() {
            rows_checked += 1;
            if row.round != i + 1 {
                failures.push(format!(
                    "cell {}: round column jumps to {} at position {}",
                    cell.id,
                    row.round,
                    i + 1
                ));
                break;
            }
            if row.wps != cell.wps {
                failures.push(format!("cell {}: wp columns disagree with manifest", cell.id));
                break;
            }
            if !(0.0..=1.0).contains(&row.test_accuracy) {
                failures.push(format!("cell {}: accuracy {} outside [0,1]", cell.id, row.test_accuracy));
            }
            if row.path_norm < 0.0 {
                failures.push(format!("cell {}: negative path norm", cell.id));
            }
            let g = (row.ground_truth_risk - row.empirical_risk).abs();
            if (g - row.generalization_error).abs() > 1e-12 {
                failures.push(format!(
                    "cell {}: generalization error column {} != |L_dagger - L| = {g}",
                    cell.id, row.generalization_error
                ));
            }
            if matches!(row.bound_variant.as_str(), "cf" | "pnp") && row.bound_holds != Some(true)
            {
                failures.push(format!(
                    "cell {}: bound violated at round {}",
                    cell.id, row.round
                ));
            }
        }
        match summary_acc.get(&cell.id) {
            Some(&acc) if acc == rows.last().unwrap().test_accuracy => {}
            Some(&acc) => failures.push(format!(
                "cell {}: summary accuracy {acc} != last-round accuracy {}",
                cell.id,
                rows.last().unwrap().test_accuracy
            )),
            None => failures.push(format!("cell {}: missing from summary", cell.id)),
        }
    }

    if let Some(regression) = &manifest.regression {
        let path = base.join(regression);
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                if serde_json::from_str::<serde_json::Value>(&text).is_err() {
                    failures.push(format!("regression file {} is not valid JSON", regression));
                }
            }
            Err(e) => failures.push(format!("cannot read regression file {regression}: {e}")),
        }
    }

    if failures.is_empty() {
        Ok(VerifyReport {
            cells: manifest.cells.len(),
            rows_checked,
        })
    } else {
        Err(CliError::verify(failures.join("\n")))
    }
}

fn spec_summary_cols(clients: usize) -> usize {
    // cell, strategy, wp_1.., depth, final_accuracy
    4 + clients
}

#[derive(Debug)]
pub struct VerifyReport {
    pub cells: usize,
    pub rows_checked: usize,
}
