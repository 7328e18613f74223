//! Run configuration: one JSON document, every field optional.

use std::path::{Path, PathBuf};

use raresub_core::autoencoder::AeConfig;
use raresub_core::diffexpr::MarkerParams;
use raresub_core::preprocess::VarianceConvention;
use raresub_core::stability::{DiscoveryRule, StabilityParams};
use raresub_core::synth::SyntheticSpec;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeSettings {
    pub latent_dim: usize,
    pub dropout_p: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for AeSettings {
    fn default() -> Self {
        let d = AeConfig::default();
        Self {
            latent_dim: d.latent_dim,
            dropout_p: d.dropout_p,
            learning_rate: d.learning_rate,
            weight_decay: d.weight_decay,
            batch_size: d.batch_size,
            val_fraction: d.val_fraction,
            patience: d.patience,
            max_epochs: d.max_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolcanoSettings {
    pub fdr_threshold: f64,
    pub effect_threshold: f64,
}

impl Default for VolcanoSettings {
    fn default() -> Self {
        Self {
            fdr_threshold: 1e-8,
            effect_threshold: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub class: Option<String>,
    /// Output root; each run creates a timestamped directory under it.
    pub out: Option<PathBuf>,
    /// Seeds autoencoder initialization, the split, and the final refit.
    pub seed: u64,
    pub top_n: usize,
    pub variance: VarianceConvention,
    pub autoencoder: AeSettings,
    pub k_min: usize,
    pub k_max: usize,
    /// k-means restarts during the k scan.
    pub scan_n_init: usize,
    pub stability: StabilityParams,
    pub rule: DiscoveryRule,
    /// Restarts for the final refit at the chosen k.
    pub final_n_init: usize,
    pub markers: MarkerParams,
    pub volcano: VolcanoSettings,
    /// Cluster for the `de` subcommand.
    pub cluster: Option<usize>,
    /// `sample_id,cluster` file for the `de` subcommand.
    pub assignments: Option<PathBuf>,
    /// Generator settings for the `synth` subcommand.
    pub synth: SyntheticSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            labels: None,
            class: None,
            out: None,
            seed: 42,
            top_n: 2000,
            variance: VarianceConvention::Population,
            autoencoder: AeSettings::default(),
            k_min: 2,
            k_max: 10,
            scan_n_init: 10,
            stability: StabilityParams::default(),
            rule: DiscoveryRule::default(),
            final_n_init: 30,
            markers: MarkerParams::default(),
            volcano: VolcanoSettings::default(),
            cluster: None,
            assignments: None,
            synth: SyntheticSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }

    pub fn ae_config(&self, input_dim: usize) -> AeConfig {
        let a = &self.autoencoder;
        AeConfig {
            input_dim,
            latent_dim: a.latent_dim,
            dropout_p: a.dropout_p,
            learning_rate: a.learning_rate,
            weight_decay: a.weight_decay,
            batch_size: a.batch_size,
            val_fraction: a.val_fraction,
            patience: a.patience,
            max_epochs: a.max_epochs,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 || self.k_max < self.k_min {
            return Err(RunError::Config(format!(
                "k range {}..={} is invalid (need 2 <= k_min <= k_max)",
                self.k_min, self.k_max
            )));
        }
        if self.top_n == 0 {
            return Err(RunError::Config("top_n must be positive".into()));
        }
        if self.scan_n_init == 0 || self.final_n_init == 0 || self.stability.n_init == 0 {
            return Err(RunError::Config("n_init values must be positive".into()));
        }
        if self.stability.runs < 2 {
            return Err(RunError::Config("stability.runs must be at least 2".into()));
        }
        self.ae_config(1).validate()?;
        Ok(())
    }

    pub fn require_data(&self) -> Result<(&Path, &Path)> {
        match (&self.data, &self.labels) {
            (Some(d), Some(l)) => Ok((d, l)),
            _ => Err(RunError::Config(
                "both --data and --labels are required".into(),
            )),
        }
    }
}
