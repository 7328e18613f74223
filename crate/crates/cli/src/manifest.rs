//! Run directories and manifests.

use std::path::{Path, PathBuf};

use raresub_core::preprocess::VarianceConvention;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, RunError};
use crate::io::{sha256_file, write_json};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path, shown_as: String) -> Result<Self> {
        let bytes = std::fs::metadata(path)
            .map_err(|e| RunError::input(path, e))?
            .len();
        Ok(Self {
            path: shown_as,
            sha256: sha256_file(path)?,
            bytes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub autoencoder: u64,
    pub stability_base: u64,
    pub stability_runs: usize,
    pub final_refit: u64,
    pub synth: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decisions {
    pub variance_ddof: u8,
    pub weight_decay_mode: String,
    pub weight_decay_applies_to: String,
    pub training_loss: String,
    pub validation_size: String,
    pub reference_run_index: usize,
    pub kmeans_restart_seeds: String,
    pub chi_square_underflow: String,
}

impl Decisions {
    pub fn for_config(cfg: &RunConfig) -> Self {
        Self {
            variance_ddof: match cfg.variance {
                VarianceConvention::Population => 0,
                VarianceConvention::Sample => 1,
            },
            weight_decay_mode: "coupled_l2".into(),
            weight_decay_applies_to: "weights_and_biases".into(),
            training_loss: "mse_per_entry".into(),
            validation_size: "ceil".into(),
            reference_run_index: 0,
            kmeans_restart_seeds: "splitmix_derived".into(),
            chi_square_underflow: "clamp_min_positive".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub decisions: Decisions,
    pub inputs: Vec<FileDigest>,
    /// Every file in the run directory except the manifest, sorted by path.
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: cfg.clone(),
            seeds: Seeds {
                autoencoder: cfg.seed,
                stability_base: cfg.stability.base_seed,
                stability_runs: cfg.stability.runs,
                final_refit: cfg.seed,
                synth: (command == "synth").then_some(cfg.synth.seed),
            },
            decisions: Decisions::for_config(cfg),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .push(FileDigest::of(path, path.display().to_string())?);
        Ok(())
    }

    /// Digests the run directory and writes the manifest into it.
    pub fn finish(mut self, run_dir: &Path) -> Result<PathBuf> {
        let mut files = Vec::new();
        collect_files(run_dir, run_dir, &mut files)?;
        files.sort();
        self.outputs = files
            .into_iter()
            .filter(|rel| rel != MANIFEST)
            .map(|rel| FileDigest::of(&run_dir.join(&rel), rel))
            .collect::<Result<_>>()?;
        let path = run_dir.join(MANIFEST);
        write_json(&path, &self)?;
        Ok(path)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| RunError::output(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| RunError::output(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root");
            let parts: Vec<_> = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect();
            out.push(parts.join("/"));
        }
    }
    Ok(())
}

/// Creates `<root>/<command>-<UTC timestamp>`, adding a counter if taken.
pub fn create_run_dir(root: &Path, command: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(|e| RunError::output(root, e))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let base = format!("{command}-{stamp}");
    let mut n = 0;
    loop {
        let name = if n == 0 {
            base.clone()
        } else {
            format!("{base}-{n}")
        };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => {
                let figs = dir.join("figures");
                std::fs::create_dir(&figs).map_err(|e| RunError::output(&figs, e))?;
                return Ok(dir);
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
            Err(e) => return Err(RunError::output(dir, e)),
        }
    }
}
