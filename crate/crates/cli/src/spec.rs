//! Experiment spec files: a flat `key = value` text format.
//!
//! Recognized keys (arrays are comma-separated):
//!
//! | key                 | meaning                                             | default |
//! |---------------------|-----------------------------------------------------|---------|
//! | `name`              | run name                                            | file stem |
//! | `dataset`           | `gridworld`, `blobs`, or `idx`                      | required |
//! | `idx_train_images`  | IDX image file (dataset = idx)                      | - |
//! | `idx_train_labels`  | IDX label file (dataset = idx)                      | - |
//! | `idx_test_images`   | held-out IDX image file (dataset = idx)             | - |
//! | `idx_test_labels`   | held-out IDX label file (dataset = idx)             | - |
//! | `clients`           | client count N                                      | 2 |
//! | `noise_levels`      | wp values for the grid                              | `0` |
//! | `noise_mode`        | `product` (all N-tuples) or `shared` (wp_k equal)   | `shared` |
//! | `noise_cell`        | explicit wp vector, one per line (repeatable)       | - |
//! | `strategies`        | any of `fedavg,scaffold,fednova`                    | `fedavg` |
//! | `rounds`            | communication rounds R                              | 40 |
//! | `local_epochs`      | local epochs E                                      | 5 |
//! | `local_lr`          | local learning rate                                 | 0.1 |
//! | `global_lr`         | global learning rate                                | 1.0 |
//! | `batch_size`        | local mini-batch size                               | 64 |
//! | `layer_dims`        | full network dims incl. augmented input and classes | `785,64,32,10` (`3,16,16,2` for gridworld) |
//! | `depth_grid`        | hidden-layer counts to sweep (overrides layer_dims) | - |
//! | `hidden_width`      | hidden width used with depth_grid                   | 32 |
//! | `limit`             | train-set truncation                                | 8000 for blobs |
//! | `test_limit`        | test-set truncation                                 | 2000 for blobs |
//! | `samples_per_client`| training draws per client (gridworld)               | 200 |
//! | `omega_variant`     | bound multiplier for grid runs: `cf`, `pnp`, `poly` | `pnp` |
//! | `c0`                | constant for the `poly` variant                     | 1.0 |
//! | `out`               | output directory                                    | `runs/<name>` |
//! | `seed`              | master seed                                         | 42 |
//! | `snapshot_every`    | write model snapshots every K rounds (0 = never)    | 0 |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fednoise_core::federation::Strategy;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    GridWorld,
    Blobs,
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl DatasetSource {
    pub fn tag(&self) -> &'static str {
        match self {
            DatasetSource::GridWorld => "gridworld",
            DatasetSource::Blobs => "blobs",
            DatasetSource::Idx { .. } => "idx",
        }
    }
}

/// Bound-multiplier selector as written in spec files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaTag {
    MeasuredOutput,
    PathNorm,
    Polynomial,
}

impl OmegaTag {
    pub fn as_str(self) -> &'static str {
        match self {
            OmegaTag::MeasuredOutput => "cf",
            OmegaTag::PathNorm => "pnp",
            OmegaTag::Polynomial => "poly",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub dataset: DatasetSource,
    pub clients: usize,
    /// One wp vector (length = clients) per sweep cell.
    pub noise_cells: Vec<Vec<f64>>,
    pub strategies: Vec<Strategy>,
    pub rounds: usize,
    pub local_epochs: usize,
    pub local_lr: f64,
    pub global_lr: f64,
    pub batch_size: usize,
    pub layer_dims: Vec<usize>,
    /// Hidden-layer counts to sweep; empty means use `layer_dims` as-is.
    pub depth_grid: Vec<usize>,
    pub hidden_width: usize,
    pub limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub samples_per_client: usize,
    pub omega_variant: OmegaTag,
    pub c0: f64,
    pub out_dir: PathBuf,
    pub master_seed: u64,
    pub snapshot_every: usize,
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| CliError::config(format!("{key}: {e}")))
        })
        .collect()
}

impl ExperimentSpec {
    pub fn parse(text: &str, default_name: &str) -> Result<Self> {
        let mut keys: BTreeMap<String, String> = BTreeMap::new();
        let mut explicit_cells: Vec<Vec<f64>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key == "noise_cell" {
                explicit_cells.push(parse_list(value, key)?);
            } else if keys.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::config(format!("duplicate key {key:?}")));
            }
        }

        let known = [
            "name",
            "dataset",
            "idx_train_images",
            "idx_train_labels",
            "idx_test_images",
            "idx_test_labels",
            "clients",
            "noise_levels",
            "noise_mode",
            "strategies",
            "rounds",
            "local_epochs",
            "local_lr",
            "global_lr",
            "batch_size",
            "layer_dims",
            "depth_grid",
            "hidden_width",
            "limit",
            "test_limit",
            "samples_per_client",
            "omega_variant",
            "c0",
            "out",
            "seed",
            "snapshot_every",
        ];
        for key in keys.keys() {
            if !known.contains(&key.as_str()) {
                return Err(CliError::config(format!("unknown key {key:?}")));
            }
        }

        let get = |key: &str| keys.get(key).map(String::as_str);
        let parse_or = |key: &str, default: &str| -> String {
            get(key).unwrap_or(default).to_string()
        };

        let name = parse_or("name", default_name);
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(CliError::config(format!("invalid name {name:?}")));
        }

        let dataset = match get("dataset") {
            Some("gridworld") => DatasetSource::GridWorld,
            Some("blobs") => DatasetSource::Blobs,
            Some("idx") => {
                let path = |key: &str| -> Result<PathBuf> {
                    get(key)
                        .map(PathBuf::from)
                        .ok_or_else(|| CliError::config(format!("dataset = idx requires {key}")))
                };
                DatasetSource::Idx {
                    train_images: path("idx_train_images")?,
                    train_labels: path("idx_train_labels")?,
                    test_images: path("idx_test_images")?,
                    test_labels: path("idx_test_labels")?,
                }
            }
            Some(other) => {
                return Err(CliError::config(format!(
                    "dataset: unknown source {other:?} (expected gridworld, blobs, or idx)"
                )))
            }
            None => return Err(CliError::config("dataset key is required")),
        };

        let clients: usize = parse_or("clients", "2")
            .parse()
            .map_err(|e| CliError::config(format!("clients: {e}")))?;
        if clients == 0 {
            return Err(CliError::config("clients must be >= 1"));
        }

        let noise_cells = if !explicit_cells.is_empty() {
            if keys.contains_key("noise_levels") || keys.contains_key("noise_mode") {
                return Err(CliError::config(
                    "noise_cell lines exclude noise_levels/noise_mode",
                ));
            }
            explicit_cells
        } else {
            let levels: Vec<f64> = parse_list(&parse_or("noise_levels", "0"), "noise_levels")?;
            if levels.is_empty() {
                return Err(CliError::config("noise_levels must be nonempty"));
            }
            match parse_or("noise_mode", "shared").as_str() {
                "shared" => levels.iter().map(|&wp| vec![wp; clients]).collect(),
                "product" => {
                    let mut cells: Vec<Vec<f64>> = vec![vec![]];
                    for _ in 0..clients {
                        cells = cells
                            .into_iter()
                            .flat_map(|cell| {
                                levels.iter().map(move |&wp| {
                                    let mut next = cell.clone();
                                    next.push(wp);
                                    next
                                })
                            })
                            .collect();
                    }
                    cells
                }
                other => {
                    return Err(CliError::config(format!(
                        "noise_mode: expected shared or product, got {other:?}"
                    )))
                }
            }
        };
        if noise_cells.is_empty() {
            return Err(CliError::config("noise grid is empty"));
        }
        for cell in &noise_cells {
            if cell.len() != clients {
                return Err(CliError::config(format!(
                    "noise cell {cell:?} has {} entries for {clients} clients",
                    cell.len()
                )));
            }
            if cell.iter().any(|wp| !(0.0..=1.0).contains(wp)) {
                return Err(CliError::config(format!(
                    "noise cell {cell:?} has a level outside [0,1]"
                )));
            }
        }

        let strategies: Vec<Strategy> = parse_or("strategies", "fedavg")
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<Strategy>()
                    .map_err(|e| CliError::config(e.to_string()))
            })
            .collect::<Result<_>>()?;
        if strategies.is_empty() {
            return Err(CliError::config("strategies must be nonempty"));
        }

        let parse_usize = |key: &str, default: &str| -> Result<usize> {
            parse_or(key, default)
                .parse()
                .map_err(|e| CliError::config(format!("{key}: {e}")))
        };
        let parse_f64 = |key: &str, default: &str| -> Result<f64> {
            parse_or(key, default)
                .parse()
                .map_err(|e| CliError::config(format!("{key}: {e}")))
        };

        let rounds = parse_usize("rounds", "40")?;
        let local_epochs = parse_usize("local_epochs", "5")?;
        let local_lr = parse_f64("local_lr", "0.1")?;
        let global_lr = parse_f64("global_lr", "1.0")?;
        let batch_size = parse_usize("batch_size", "64")?;
        if rounds == 0 || local_epochs == 0 || batch_size == 0 {
            return Err(CliError::config(
                "rounds, local_epochs, and batch_size must be >= 1",
            ));
        }
        if !(0.0..=1.0).contains(&global_lr) {
            return Err(CliError::config("global_lr must lie in [0,1]"));
        }
        if local_lr <= 0.0 {
            return Err(CliError::config("local_lr must be positive"));
        }

        let layer_dims_default = match dataset {
            DatasetSource::GridWorld => "3,16,16,2",
            _ => "785,64,32,10",
        };
        let layer_dims: Vec<usize> =
            parse_list(&parse_or("layer_dims", layer_dims_default), "layer_dims")?;
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(CliError::config(format!("layer_dims {layer_dims:?} invalid")));
        }
        if dataset == DatasetSource::GridWorld && (layer_dims[0] != 3 || *layer_dims.last().unwrap() != 2)
        {
            return Err(CliError::config(
                "gridworld runs need layer_dims starting at 3 (2 coords + bias) and ending at 2",
            ));
        }

        let depth_grid: Vec<usize> = match get("depth_grid") {
            Some(v) => parse_list(v, "depth_grid")?,
            None => Vec::new(),
        };
        if depth_grid.iter().any(|&d| d == 0) {
            return Err(CliError::config("depth_grid entries must be >= 1"));
        }
        let hidden_width = parse_usize("hidden_width", "32")?;
        if hidden_width < 2 {
            return Err(CliError::config(
                "hidden_width must be >= 2 (one unit is the constant-1 unit)",
            ));
        }

        let (limit_default, test_default) = match dataset {
            DatasetSource::Blobs => (Some(8000), Some(2000)),
            _ => (None, None),
        };
        let limit = match get("limit") {
            Some(v) => Some(
                v.parse::<usize>()
                    .map_err(|e| CliError::config(format!("limit: {e}")))?,
            ),
            None => limit_default,
        };
        let test_limit = match get("test_limit") {
            Some(v) => Some(
                v.parse::<usize>()
                    .map_err(|e| CliError::config(format!("test_limit: {e}")))?,
            ),
            None => test_default,
        };
        if matches!(dataset, DatasetSource::Blobs) && (limit.is_none() || test_limit.is_none()) {
            return Err(CliError::config("blobs runs need limit and test_limit"));
        }

        let samples_per_client = parse_usize("samples_per_client", "200")?;
        if samples_per_client == 0 {
            return Err(CliError::config("samples_per_client must be >= 1"));
        }

        let omega_variant = match parse_or("omega_variant", "pnp").as_str() {
            "cf" => OmegaTag::MeasuredOutput,
            "pnp" => OmegaTag::PathNorm,
            "poly" => OmegaTag::Polynomial,
            other => {
                return Err(CliError::config(format!(
                    "omega_variant: expected cf, pnp, or poly, got {other:?}"
                )))
            }
        };
        let c0 = parse_f64("c0", "1")?;
        if c0 <= 0.0 {
            return Err(CliError::config("c0 must be positive"));
        }

        let out_dir = PathBuf::from(parse_or("out", &format!("runs/{name}")));
        let master_seed: u64 = parse_or("seed", "42")
            .parse()
            .map_err(|e| CliError::config(format!("seed: {e}")))?;
        let snapshot_every = parse_usize("snapshot_every", "0")?;

        Ok(ExperimentSpec {
            name,
            dataset,
            clients,
            noise_cells,
            strategies,
            rounds,
            local_epochs,
            local_lr,
            global_lr,
            batch_size,
            layer_dims,
            depth_grid,
            hidden_width,
            limit,
            test_limit,
            samples_per_client,
            omega_variant,
            c0,
            out_dir,
            master_seed,
            snapshot_every,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read spec {}: {e}", path.display())))?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("experiment");
        Self::parse(&text, stem)
    }

    /// Network dims for a given hidden-layer count from the depth grid.
    pub fn dims_for_depth(&self, depth: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(depth + 2);
        dims.push(self.layer_dims[0]);
        dims.extend(std::iter::repeat(self.hidden_width).take(depth));
        dims.push(*self.layer_dims.last().unwrap());
        dims
    }

    /// Fully resolved, order-stable rendering; the sweep hash is the
    /// SHA-256 of this text, so any effective setting change changes the
    /// manifest hash.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("name", self.name.clone());
        push("dataset", self.dataset.tag().into());
        if let DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } = &self.dataset
        {
            push("idx_train_images", train_images.display().to_string());
            push("idx_train_labels", train_labels.display().to_string());
            push("idx_test_images", test_images.display().to_string());
            push("idx_test_labels", test_labels.display().to_string());
        }
        push("clients", self.clients.to_string());
        for cell in &self.noise_cells {
            push(
                "noise_cell",
                cell.iter()
                    .map(|w| format!("{w}"))
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        push(
            "strategies",
            self.strategies
                .iter()
                .map(|s| s.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        push("rounds", self.rounds.to_string());
        push("local_epochs", self.local_epochs.to_string());
        push("local_lr", format!("{}", self.local_lr));
        push("global_lr", format!("{}", self.global_lr));
        push("batch_size", self.batch_size.to_string());
        push(
            "layer_dims",
            self.layer_dims
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        if !self.depth_grid.is_empty() {
            push(
                "depth_grid",
                self.depth_grid
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            );
            push("hidden_width", self.hidden_width.to_string());
        }
        if let Some(limit) = self.limit {
            push("limit", limit.to_string());
        }
        if let Some(limit) = self.test_limit {
            push("test_limit", limit.to_string());
        }
        push("samples_per_client", self.samples_per_client.to_string());
        push("omega_variant", self.omega_variant.as_str().into());
        push("c0", format!("{}", self.c0));
        push("seed", self.master_seed.to_string());
        push("snapshot_every", self.snapshot_every.to_string());
        out
    }

    pub fn spec_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_text().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_product_sweep() {
        let spec = ExperimentSpec::parse(
            "dataset = blobs\nclients = 2\nnoise_levels = 0,0.5\nnoise_mode = product\n",
            "demo",
        )
        .unwrap();
        assert_eq!(spec.name, "demo");
        assert_eq!(
            spec.noise_cells,
            vec![
                vec![0.0, 0.0],
                vec![0.0, 0.5],
                vec![0.5, 0.0],
                vec![0.5, 0.5]
            ]
        );
        assert_eq!(spec.rounds, 40);
        assert_eq!(spec.local_epochs, 5);
        assert_eq!(spec.local_lr, 0.1);
        assert_eq!(spec.global_lr, 1.0);
        assert_eq!(spec.layer_dims, vec![785, 64, 32, 10]);
        assert_eq!(spec.limit, Some(8000));
    }

    #[test]
    fn shared_mode_duplicates_levels() {
        let spec = ExperimentSpec::parse(
            "dataset = gridworld\nclients = 4\nnoise_levels = 0,0.1\n",
            "g",
        )
        .unwrap();
        assert_eq!(
            spec.noise_cells,
            vec![vec![0.0; 4], vec![0.1; 4]]
        );
        assert_eq!(spec.layer_dims, vec![3, 16, 16, 2]);
    }

    #[test]
    fn explicit_cells_override_levels() {
        let spec = ExperimentSpec::parse(
            "dataset = gridworld\nclients = 2\nnoise_cell = 0.1,0.3\nnoise_cell = 0,0\n",
            "g",
        )
        .unwrap();
        assert_eq!(spec.noise_cells, vec![vec![0.1, 0.3], vec![0.0, 0.0]]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentSpec::parse("dataset = blobs\nbogus = 1\n", "x").is_err());
        assert!(ExperimentSpec::parse("dataset = nope\n", "x").is_err());
        assert!(ExperimentSpec::parse("dataset = blobs\nnoise_levels = 1.5\n", "x").is_err());
        assert!(ExperimentSpec::parse("dataset = blobs\nglobal_lr = 2\n", "x").is_err());
        assert!(ExperimentSpec::parse("", "x").is_err());
    }

    #[test]
    fn cell_length_must_match_clients() {
        let err = ExperimentSpec::parse(
            "dataset = gridworld\nclients = 3\nnoise_cell = 0.1,0.3\n",
            "g",
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_tracks_effective_settings() {
        let a = ExperimentSpec::parse("dataset = blobs\nseed = 1\n", "x").unwrap();
        let b = ExperimentSpec::parse("dataset = blobs\nseed = 2\n", "x").unwrap();
        let a2 = ExperimentSpec::parse("dataset = blobs\nseed = 1\n", "x").unwrap();
        assert_ne!(a.spec_hash(), b.spec_hash());
        assert_eq!(a.spec_hash(), a2.spec_hash());
        // the output directory is not part of the effective settings
        let mut moved = a.clone();
        moved.out_dir = PathBuf::from("elsewhere");
        assert_eq!(moved.spec_hash(), a.spec_hash());
    }

    #[test]
    fn depth_dims_are_constructed() {
        let spec = ExperimentSpec::parse(
            "dataset = blobs\ndepth_grid = 2,3\nhidden_width = 16\n",
            "x",
        )
        .unwrap();
        assert_eq!(spec.dims_for_depth(3), vec![785, 16, 16, 16, 10]);
    }
}
