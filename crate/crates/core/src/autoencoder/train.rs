use alloc::boxed::Box;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{mse_per_entry, AeConfig, AutoencoderModel, Dense};
use crate::rng::{derive_seed, SeededRng};
use crate::{Error, Matrix, Result};

const SPLIT_STREAM: u64 = 0x5917;
const EPOCH_STREAM: u64 = 0xE90C;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Per-epoch reconstruction errors. Epochs are 1-based.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Per-entry MSE over training mini-batches (dropout active).
    pub train_mse: Vec<f64>,
    /// Per-entry MSE on the validation split (evaluation mode).
    pub val_mse: Vec<f64>,
    /// The same losses summed over features, averaged over samples.
    pub train_mse_per_sample: Vec<f64>,
    pub val_mse_per_sample: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.val_mse.len()
    }
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl Adam {
    fn new(model: &AutoencoderModel) -> Self {
        Self {
            m: model.layers.iter().map(Dense::zeros_like).collect(),
            v: model.layers.iter().map(Dense::zeros_like).collect(),
            t: 0,
        }
    }

    /// One step with coupled L2 decay (`g + weight_decay * theta`).
    fn step(&mut self, model: &mut AutoencoderModel, grads: &[Dense], lr: f64, weight_decay: f64) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(BETA1, self.t as f64);
        let c2 = 1.0 - libm::pow(BETA2, self.t as f64);
        let layers = model
            .layers
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v));
        for ((layer, g), (m, v)) in layers {
            let pairs = [
                (
                    layer.weights.as_mut_slice(),
                    g.weights.as_slice(),
                    m.weights.as_mut_slice(),
                    v.weights.as_mut_slice(),
                ),
                (
                    layer.bias.as_mut_slice(),
                    g.bias.as_slice(),
                    m.bias.as_mut_slice(),
                    v.bias.as_mut_slice(),
                ),
            ];
            for (theta, g, m, v) in pairs {
                for i in 0..theta.len() {
                    let gi = g[i] + weight_decay * theta[i];
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    theta[i] -= lr * m_hat / (libm::sqrt(v_hat) + EPSILON);
                }
            }
        }
    }
}

/// Seeded shuffle of `0..n`; the first `n - n_val` indices train.
fn split(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_val = libm::ceil(n as f64 * val_fraction) as usize;
    let n_train = n.saturating_sub(n_val);
    if n_val < 2 || n_train < 2 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    SeededRng::stream(seed, SPLIT_STREAM).shuffle(&mut idx);
    let val = idx.split_off(n_train);
    Ok((idx, val))
}

/// Adam on per-entry MSE with early stopping on validation MSE.
///
/// Returns the parameters of the best validation epoch.
pub fn train(
    model: AutoencoderModel,
    x: &Matrix,
    config: &AeConfig,
) -> Result<(AutoencoderModel, TrainHistory)> {
    config.validate()?;
    model.check_input(x)?;
    let (train_idx, val_idx) = split(x.rows(), config.val_fraction, config.seed)?;
    let x_val = x.select_rows(&val_idx);
    let d = x.cols() as f64;

    let mut model = model;
    let mut adam = Adam::new(&model);
    let mut best = model.clone();
    let mut history = TrainHistory {
        best_val_mse: f64::INFINITY,
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        train_indices: train_idx.clone(),
        val_indices: val_idx.clone(),
        ..TrainHistory::default()
    };
    let epoch_seed = derive_seed(config.seed, EPOCH_STREAM);
    let mut order = train_idx;

    for epoch in 1..=config.max_epochs {
        let mut rng = SeededRng::stream(epoch_seed, epoch as u64);
        rng.shuffle(&mut order);
        let mut weighted = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = x.select_rows(batch);
            let cache = model.forward_train(&xb, Some(&mut rng));
            let (loss, grads) = model.backward(&cache, &xb);
            weighted += loss * batch.len() as f64;
            adam.step(
                &mut model,
                &grads,
                config.learning_rate,
                config.weight_decay,
            );
        }
        let train_mse = weighted / order.len() as f64;
        let val_mse = mse_per_entry(&x_val, &model.reconstruct(&x_val)?)?;
        if !train_mse.is_finite() || !val_mse.is_finite() || !model.is_finite() {
            let checkpoint = (history.best_epoch > 0).then(|| Box::new(best));
            return Err(Error::NonFiniteLoss { epoch, checkpoint });
        }
        history.train_mse.push(train_mse);
        history.val_mse.push(val_mse);
        history.train_mse_per_sample.push(train_mse * d);
        history.val_mse_per_sample.push(val_mse * d);
        history.stopped_epoch = epoch;
        if val_mse < history.best_val_mse {
            history.best_val_mse = val_mse;
            history.best_epoch = epoch;
            best = model.clone();
        } else if epoch - history.best_epoch >= config.patience {
            break;
        }
    }
    Ok((best, history))
}
