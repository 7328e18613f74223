//! Seeded synthetic cohorts with background groups and a planted rare subtype.
//!
//! Generation, in log space:
//!
//! 1. Gene indices are shuffled; the first `n_marker_genes` become markers and
//!    the rest are split into `n_background_clusters` contiguous blocks.
//! 2. Samples are assigned round-robin to background clusters, then shuffled.
//!    Cluster `b` is raised by `background_effect` on block `b`.
//! 3. The first `round(rare_fraction * n_samples)` members of background
//!    cluster 0 (in sample order) form the rare subtype. They are shifted by
//!    `+effect_size` on the first half of the markers (rounded up) and by
//!    `-effect_size` on the rest.
//! 4. `v = baseline + signal + noise_sigma * N(0, 1)`, drawn row-major, and
//!    `x = max(exp(v) - 1, 0)`, so `log1p(x) = v` wherever `v >= 0`.
//!
//! All randomness comes from xoshiro256++ seeded through SplitMix64, in the
//! order: gene shuffle, sample shuffle, noise.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::ExpressionMatrix;
use crate::rng::SeededRng;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_genes: usize,
    pub n_background_clusters: usize,
    pub rare_fraction: f64,
    pub n_marker_genes: usize,
    pub effect_size: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub background_effect: f64,
    pub baseline: f64,
    /// Class label given to every sample.
    pub class_name: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 150,
            n_genes: 2000,
            n_background_clusters: 3,
            rare_fraction: 0.07,
            n_marker_genes: 60,
            effect_size: 3.0,
            noise_sigma: 0.5,
            seed: 1,
            background_effect: 1.0,
            baseline: 2.0,
            class_name: String::from("SYN"),
        }
    }
}

impl SyntheticSpec {
    /// Planted subtype size, rounding halves away from zero.
    pub fn n_rare(&self) -> usize {
        libm::round(self.rare_fraction * self.n_samples as f64) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rare_fraction > 0.0 && self.rare_fraction <= 0.1) {
            return Err(Error::InfeasibleSpec("rare_fraction must be in (0, 0.1]"));
        }
        if self.n_rare() < 3 {
            return Err(Error::InfeasibleSpec(
                "planted subtype would have fewer than 3 samples",
            ));
        }
        if self.n_background_clusters == 0 {
            return Err(Error::InfeasibleSpec(
                "need at least one background cluster",
            ));
        }
        if self.n_samples.div_ceil(self.n_background_clusters) < self.n_rare() {
            return Err(Error::InfeasibleSpec(
                "background cluster 0 is smaller than the subtype",
            ));
        }
        if self.n_marker_genes < 2 {
            return Err(Error::InfeasibleSpec("need at least two marker genes"));
        }
        if self.n_genes < self.n_marker_genes + self.n_background_clusters {
            return Err(Error::InfeasibleSpec(
                "not enough genes for markers and background blocks",
            ));
        }
        let reals = [
            self.effect_size,
            self.noise_sigma,
            self.background_effect,
            self.baseline,
        ];
        if reals.iter().any(|v| !v.is_finite()) || self.noise_sigma < 0.0 || self.effect_size < 0.0
        {
            return Err(Error::InfeasibleSpec(
                "effects must be finite, sigma and effect_size >= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub matrix: ExpressionMatrix,
    /// Background cluster per sample; planted members get `n_background_clusters`.
    pub ground_truth: Vec<usize>,
    pub member_ids: Vec<String>,
    pub marker_gene_ids: Vec<String>,
    /// Markers shifted upward; the rest of `marker_gene_ids` shift downward.
    pub up_marker_ids: Vec<String>,
    /// Noise-free log-space signal.
    pub signal: Matrix,
}

pub fn sample_id(i: usize) -> String {
    format!("sample_{i}")
}

pub fn gene_id(j: usize) -> String {
    format!("gene_{j}")
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (n, g, nb) = (spec.n_samples, spec.n_genes, spec.n_background_clusters);
    let mut rng = SeededRng::new(spec.seed);

    let mut genes: Vec<usize> = (0..g).collect();
    rng.shuffle(&mut genes);
    let markers = &genes[..spec.n_marker_genes];
    let n_up = spec.n_marker_genes.div_ceil(2);
    let rest = &genes[spec.n_marker_genes..];
    let block = rest.len() / nb;

    let mut bg: Vec<usize> = (0..n).map(|i| i % nb).collect();
    rng.shuffle(&mut bg);
    let members: Vec<usize> = (0..n).filter(|&i| bg[i] == 0).take(spec.n_rare()).collect();

    let mut signal = Matrix::from_fn(n, g, |_, _| spec.baseline);
    for (i, &b) in bg.iter().enumerate() {
        let end = if b + 1 == nb {
            rest.len()
        } else {
            (b + 1) * block
        };
        for &j in &rest[b * block..end] {
            signal.row_mut(i)[j] += spec.background_effect;
        }
    }
    let mut ground_truth = bg;
    for &i in &members {
        ground_truth[i] = nb;
        for (m, &j) in markers.iter().enumerate() {
            let shift = if m < n_up {
                spec.effect_size
            } else {
                -spec.effect_size
            };
            signal.row_mut(i)[j] += shift;
        }
    }

    let mut values = signal.clone();
    for v in values.as_mut_slice() {
        let lv = *v + spec.noise_sigma * rng.normal();
        *v = (libm::exp(lv) - 1.0).max(0.0);
    }

    let sample_ids: Vec<String> = (0..n).map(sample_id).collect();
    let gene_ids: Vec<String> = (0..g).map(gene_id).collect();
    let member_ids = members.iter().map(|&i| sample_ids[i].clone()).collect();
    let marker_gene_ids = markers.iter().map(|&j| gene_ids[j].clone()).collect();
    let up_marker_ids = markers[..n_up]
        .iter()
        .map(|&j| gene_ids[j].clone())
        .collect();
    let matrix = ExpressionMatrix::new(sample_ids, gene_ids, values)?
        .with_class_labels(vec![spec.class_name.clone(); n])?;
    Ok(SyntheticData {
        matrix,
        ground_truth,
        member_ids,
        marker_gene_ids,
        up_marker_ids,
        signal,
    })
}
