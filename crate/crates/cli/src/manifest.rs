//! Line-oriented run manifests.
//!
//! A manifest records the resolved spec hash, the seeds in play, and one
//! line per sweep cell with its output file and completion status. Paths
//! are stored relative to the manifest's directory.

use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct CellEntry {
    pub id: String,
    pub strategy: String,
    pub wps: Vec<f64>,
    /// Hidden-layer count when the sweep varies depth.
    pub depth: Option<usize>,
    /// Cell-identity seed (drives the per-client noise streams).
    pub seed: u64,
    /// Metrics CSV file name, relative to the manifest directory.
    pub csv: String,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub spec_hash: String,
    pub version: String,
    pub name: String,
    pub master_seed: u64,
    pub clients: usize,
    pub cells: Vec<CellEntry>,
    pub summary: String,
    pub regression: Option<String>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("fednoise-manifest\t1\n");
        out.push_str(&format!("spec_hash\t{}\n", self.spec_hash));
        out.push_str(&format!("version\t{}\n", self.version));
        out.push_str(&format!("name\t{}\n", self.name));
        out.push_str(&format!("master_seed\t{}\n", self.master_seed));
        out.push_str(&format!("clients\t{}\n", self.clients));
        out.push_str(&format!("summary\t{}\n", self.summary));
        if let Some(r) = &self.regression {
            out.push_str(&format!("regression\t{r}\n"));
        }
        for cell in &self.cells {
            out.push_str(&format!(
                "cell\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                cell.id,
                cell.strategy,
                cell.wps
                    .iter()
                    .map(|w| format!("{w}"))
                    .collect::<Vec<_>>()
                    .join(","),
                cell.depth.map_or("-".to_string(), |d| d.to_string()),
                cell.seed,
                cell.csv,
                if cell.completed { "done" } else { "failed" },
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec_hash = None;
        let mut version = None;
        let mut name = None;
        let mut master_seed = None;
        let mut clients = None;
        let mut summary = None;
        let mut regression = None;
        let mut cells = Vec::new();

        let field = |line: usize, got: &str| {
            CliError::data(format!("manifest line {line}: malformed {got} entry"))
        };

        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            match parts[0] {
                "fednoise-manifest" => {}
                "spec_hash" if parts.len() == 2 => spec_hash = Some(parts[1].to_string()),
                "version" if parts.len() == 2 => version = Some(parts[1].to_string()),
                "name" if parts.len() == 2 => name = Some(parts[1].to_string()),
                "master_seed" if parts.len() == 2 => {
                    master_seed =
                        Some(parts[1].parse().map_err(|_| field(idx + 1, "master_seed"))?)
                }
                "clients" if parts.len() == 2 => {
                    clients = Some(parts[1].parse().map_err(|_| field(idx + 1, "clients"))?)
                }
                "summary" if parts.len() == 2 => summary = Some(parts[1].to_string()),
                "regression" if parts.len() == 2 => regression = Some(parts[1].to_string()),
                "cell" if parts.len() == 8 => {
                    let wps = parts[3]
                        .split(',')
                        .map(|w| w.parse::<f64>().map_err(|_| field(idx + 1, "cell wp")))
                        .collect::<Result<Vec<f64>>>()?;
                    let depth = match parts[4] {
                        "-" => None,
                        d => Some(d.parse().map_err(|_| field(idx + 1, "cell depth"))?),
                    };
                    cells.push(CellEntry {
                        id: parts[1].to_string(),
                        strategy: parts[2].to_string(),
                        wps,
                        depth,
                        seed: parts[5].parse().map_err(|_| field(idx + 1, "cell seed"))?,
                        csv: parts[6].to_string(),
                        completed: parts[7] == "done",
                    });
                }
                other => {
                    return Err(CliError::data(format!(
                        "manifest line {}: unknown entry {other:?}",
                        idx + 1
                    )))
                }
            }
        }

        Ok(RunManifest {
            spec_hash: spec_hash.ok_or_else(|| CliError::data("manifest missing spec_hash"))?,
            version: version.ok_or_else(|| CliError::data("manifest missing version"))?,
            name: name.ok_or_else(|| CliError::data("manifest missing name"))?,
            master_seed: master_seed
                .ok_or_else(|| CliError::data("manifest missing master_seed"))?,
            clients: clients.ok_or_else(|| CliError::data("manifest missing clients"))?,
            cells,
            summary: summary.ok_or_else(|| CliError::data("manifest missing summary"))?,
            regression,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read manifest {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Directory all relative entries resolve against.
    pub fn base_dir(manifest_path: &Path) -> PathBuf {
        manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let manifest = RunManifest {
            spec_hash: "abc123".into(),
            version: "0.1.0".into(),
            name: "demo".into(),
            master_seed: 42,
            clients: 2,
            cells: vec![
                CellEntry {
                    id: "fedavg_wp0-0".into(),
                    strategy: "fedavg".into(),
                    wps: vec![0.0, 0.0],
                    depth: None,
                    seed: 7,
                    csv: "cell_fedavg_wp0-0.csv".into(),
                    completed: true,
                },
                CellEntry {
                    id: "fedavg_wp0.1-0.2_L3".into(),
                    strategy: "fedavg".into(),
                    wps: vec![0.1, 0.2],
                    depth: Some(3),
                    seed: 9,
                    csv: "cell_fedavg_wp0.1-0.2_L3.csv".into(),
                    completed: false,
                },
            ],
            summary: "summary.csv".into(),
            regression: Some("regression.json".into()),
        };
        let text = manifest.render();
        let back = RunManifest::parse(&text).unwrap();
        assert_eq!(back, manifest);
    }

    #[test]
    fn missing_header_fields_are_data_errors() {
        let err = RunManifest::parse("fednoise-manifest\t1\n").unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
