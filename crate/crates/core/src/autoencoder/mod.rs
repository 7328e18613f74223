//! Dense autoencoder `D_in -> H1 -> H2 -> latent -> H2 -> H1 -> D_in`.
//!
//! Hidden sizes follow `H1 = min(1024, max(256, D_in / 2))` and
//! `H2 = min(512, max(128, D_in / 4))` (integer division). Hidden layers use
//! ReLU, the latent and output layers are linear, and inverted dropout is
//! applied after the first encoder activation during training only.

mod gradcheck;
mod train;

pub use gradcheck::{gradient_check, objective, GradCheckReport};
pub use train::{train, TrainHistory};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::matrix::Op;
use crate::rng::SeededRng;
use crate::{Error, Matrix, Result};

/// Number of layers in the encoder half.
pub const ENCODER_LAYERS: usize = 3;
const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub dropout_p: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            input_dim: 0,
            latent_dim: 128,
            dropout_p: 0.1,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            batch_size: 256,
            val_fraction: 0.15,
            patience: 15,
            max_epochs: 500,
            seed: 42,
        }
    }
}

/// `(H1, H2)` for an input dimension.
pub fn hidden_sizes(input_dim: usize) -> (usize, usize) {
    let h1 = (input_dim / 2).clamp(256, 1024);
    let h2 = (input_dim / 4).clamp(128, 512);
    (h1, h2)
}

impl AeConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            ..Self::default()
        }
    }

    pub fn hidden_sizes(&self) -> (usize, usize) {
        hidden_sizes(self.input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidDims(
                "input and latent dimensions must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidConfig("dropout_p must be in [0, 1)"));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(
                "learning_rate must be > 0 and weight_decay >= 0",
            ));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, patience and max_epochs must be positive",
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidConfig("val_fraction must be in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

/// Fully connected layer; `weights` is `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Self {
            weights: Matrix::zeros(self.weights.rows(), self.weights.cols()),
            bias: vec![0.0; self.bias.len()],
            activation: self.activation,
        }
    }

    fn glorot(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut SeededRng) -> Self {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        Self {
            weights: Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_range(-limit, limit)),
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    /// `x W + b` followed by the activation; returns `(pre, post)`.
    fn forward(&self, x: &Matrix) -> (Matrix, Matrix) {
        let mut pre = Matrix::product(x, Op::N, &self.weights, Op::N);
        for i in 0..pre.rows() {
            for (v, b) in pre.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        let post = match self.activation {
            Activation::Relu => pre.map(|v| v.max(0.0)),
            Activation::Linear => pre.clone(),
        };
        (pre, post)
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.as_slice().iter().chain(self.bias.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub input_dim: usize,
    pub hidden: (usize, usize),
    pub latent_dim: usize,
    pub dropout_p: f64,
    /// Three encoder layers followed by three decoder layers.
    pub layers: Vec<Dense>,
}

/// Model with hidden sizes from the sizing rule.
pub fn build(config: &AeConfig) -> Result<AutoencoderModel> {
    let (h1, h2) = config.hidden_sizes();
    build_with_hidden(config, h1, h2)
}

/// Model with explicit hidden sizes; used for small gradient-check nets.
pub fn build_with_hidden(config: &AeConfig, h1: usize, h2: usize) -> Result<AutoencoderModel> {
    config.validate()?;
    if h1 < h2 || h2 < config.latent_dim {
        return Err(Error::InvalidDims(
            "hidden sizes must satisfy H1 >= H2 >= latent_dim",
        ));
    }
    let d = config.input_dim;
    let l = config.latent_dim;
    let shapes = [
        (d, h1, Activation::Relu),
        (h1, h2, Activation::Relu),
        (h2, l, Activation::Linear),
        (l, h2, Activation::Relu),
        (h2, h1, Activation::Relu),
        (h1, d, Activation::Linear),
    ];
    let mut rng = SeededRng::stream(config.seed, INIT_STREAM);
    let layers = shapes
        .iter()
        .map(|&(fi, fo, act)| Dense::glorot(fi, fo, act, &mut rng))
        .collect();
    Ok(AutoencoderModel {
        input_dim: d,
        hidden: (h1, h2),
        latent_dim: l,
        dropout_p: config.dropout_p,
        layers,
    })
}

/// Activations kept for backpropagation.
pub(crate) struct ForwardCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    /// Inverted-dropout multipliers on the first layer's output.
    mask: Option<Matrix>,
    output: Matrix,
}

impl AutoencoderModel {
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weights.shape()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.params().all(|p| p.is_finite()))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::ShapeMismatch {
                expected_rows: x.rows(),
                expected_cols: self.input_dim,
                rows: x.rows(),
                cols: x.cols(),
            });
        }
        Ok(())
    }

    fn run(&self, x: &Matrix, layers: core::ops::Range<usize>) -> Matrix {
        let mut a = x.clone();
        for l in layers {
            a = self.layers[l].forward(&a).1;
        }
        a
    }

    /// Latent codes (evaluation mode, no dropout).
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(self.run(x, 0..ENCODER_LAYERS))
    }

    /// Reconstruction (evaluation mode, no dropout).
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(self.run(x, 0..self.layers.len()))
    }

    /// Training-mode forward pass; dropout is drawn from `rng` when given.
    pub(crate) fn forward_train(&self, x: &Matrix, rng: Option<&mut SeededRng>) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut mask = None;
        let mut a = x.clone();
        let mut rng = rng;
        for (l, layer) in self.layers.iter().enumerate() {
            let (z, mut post) = layer.forward(&a);
            if l == 0 && self.dropout_p > 0.0 {
                if let Some(rng) = rng.as_deref_mut() {
                    let keep = 1.0 - self.dropout_p;
                    let m = Matrix::from_fn(post.rows(), post.cols(), |_, _| {
                        if rng.uniform() < self.dropout_p {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    });
                    for (v, s) in post.as_mut_slice().iter_mut().zip(m.as_slice()) {
                        *v *= s;
                    }
                    mask = Some(m);
                }
            }
            inputs.push(core::mem::replace(&mut a, post));
            pre.push(z);
        }
        ForwardCache {
            inputs,
            pre,
            mask,
            output: a,
        }
    }

    /// Gradients of the per-entry MSE against `target`; returns `(loss, grads)`.
    pub(crate) fn backward(&self, cache: &ForwardCache, target: &Matrix) -> (f64, Vec<Dense>) {
        let out = &cache.output;
        let scale = 1.0 / (out.rows() * out.cols()) as f64;
        let mut loss = 0.0;
        let mut delta = Matrix::zeros(out.rows(), out.cols());
        for ((d, o), t) in delta
            .as_mut_slice()
            .iter_mut()
            .zip(out.as_slice())
            .zip(target.as_slice())
        {
            let r = o - t;
            loss += r * r;
            *d = 2.0 * r * scale;
        }
        loss *= scale;

        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l == 0 {
                if let Some(m) = &cache.mask {
                    for (d, s) in delta.as_mut_slice().iter_mut().zip(m.as_slice()) {
                        *d *= s;
                    }
                }
            }
            if layer.activation == Activation::Relu {
                for (d, z) in delta.as_mut_slice().iter_mut().zip(cache.pre[l].as_slice()) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            grads[l]
                .weights
                .gemm(1.0, &cache.inputs[l], Op::T, &delta, Op::N, 0.0);
            for i in 0..delta.rows() {
                for (g, d) in grads[l].bias.iter_mut().zip(delta.row(i)) {
                    *g += d;
                }
            }
            if l > 0 {
                delta = Matrix::product(&delta, Op::N, &layer.weights, Op::T);
            }
        }
        (loss, grads)
    }
}

fn check_same_shape(x: &Matrix, x_hat: &Matrix) -> Result<()> {
    if x.shape() != x_hat.shape() {
        return Err(Error::ShapeMismatch {
            expected_rows: x.rows(),
            expected_cols: x.cols(),
            rows: x_hat.rows(),
            cols: x_hat.cols(),
        });
    }
    Ok(())
}

/// `(1/N) sum_i ||x_i - x_hat_i||^2`: squared error summed per sample,
/// averaged over samples.
pub fn mse(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    check_same_shape(x, x_hat)?;
    if x.rows() == 0 {
        return Ok(0.0);
    }
    let sse: f64 = x
        .as_slice()
        .iter()
        .zip(x_hat.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sse / x.rows() as f64)
}

/// Squared error averaged over every entry; the training objective.
pub fn mse_per_entry(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    let per_sample = mse(x, x_hat)?;
    Ok(if x.cols() == 0 {
        0.0
    } else {
        per_sample / x.cols() as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sizing_rule() {
        let m = build(&AeConfig::new(2000)).unwrap();
        assert_eq!((m.hidden.0, m.hidden.1, m.latent_dim), (1000, 500, 128));
        let m = build(&AeConfig::new(500)).unwrap();
        assert_eq!((m.hidden.0, m.hidden.1, m.latent_dim), (256, 128, 128));
        assert_eq!(hidden_sizes(5000), (1024, 512));
        assert_eq!(hidden_sizes(1001), (500, 250));
    }

    #[test]
    fn decoder_mirrors_encoder() {
        let m = build(&AeConfig::new(600)).unwrap();
        assert_eq!(
            m.layer_shapes(),
            vec![
                (600, 300),
                (300, 150),
                (150, 128),
                (128, 150),
                (150, 300),
                (300, 600)
            ]
        );
    }

    #[test]
    fn invalid_dims() {
        let mut c = AeConfig::new(100);
        c.latent_dim = 200;
        assert!(matches!(build(&c), Err(Error::InvalidDims(_))));
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let c = AeConfig::new(300);
        assert_eq!(build(&c).unwrap(), build(&c).unwrap());
        let mut other = c.clone();
        other.seed += 1;
        assert_ne!(build(&c).unwrap(), build(&other).unwrap());
    }

    #[test]
    fn encode_is_deterministic_and_row_independent() {
        let c = AeConfig::new(300);
        let m = build(&c).unwrap();
        let mut rng = SeededRng::new(1);
        let x = Matrix::from_fn(7, 300, |_, _| rng.normal());
        let z1 = m.encode(&x).unwrap();
        assert_eq!(z1, m.encode(&x).unwrap());
        assert_eq!(z1.shape(), (7, 128));
        let single = m.encode(&x.select_rows(&[4])).unwrap();
        for (a, b) in single.row(0).iter().zip(z1.row(4)) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(matches!(
            m.encode(&Matrix::zeros(2, 5)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_dropout_train_mode_equals_eval() {
        let mut c = AeConfig::new(300);
        c.dropout_p = 0.0;
        let m = build(&c).unwrap();
        let mut rng = SeededRng::new(2);
        let x = Matrix::from_fn(5, 300, |_, _| rng.normal());
        let train = m.forward_train(&x, Some(&mut rng)).output;
        let eval = m.reconstruct(&x).unwrap();
        for (a, b) in train.as_slice().iter().zip(eval.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn dropout_mask_is_inverted() {
        let m = build(&AeConfig::new(300)).unwrap();
        let mut rng = SeededRng::new(3);
        let x = Matrix::from_fn(40, 300, |_, _| rng.normal());
        let cache = m.forward_train(&x, Some(&mut rng));
        let mask = cache.mask.expect("dropout active");
        let zeros = mask.as_slice().iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / mask.as_slice().len() as f64;
        assert!((frac - 0.1).abs() < 0.02, "dropped fraction {frac}");
        assert!(mask
            .as_slice()
            .iter()
            .all(|&v| v == 0.0 || (v - 1.0 / 0.9).abs() < 1e-15));
    }

    #[test]
    fn mse_conventions() {
        let x = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let xh = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        assert_eq!(mse(&x, &xh).unwrap(), 1.0);
        assert_eq!(mse_per_entry(&x, &xh).unwrap(), 0.5);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert!(mse(&x, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn mse_matches_double_loop() {
        let mut rng = SeededRng::new(4);
        let a = Matrix::from_fn(6, 5, |_, _| rng.normal());
        let b = Matrix::from_fn(6, 5, |_, _| rng.normal());
        let mut total = 0.0;
        for i in 0..6 {
            let mut row = 0.0;
            for j in 0..5 {
                row += (a[(i, j)] - b[(i, j)]) * (a[(i, j)] - b[(i, j)]);
            }
            total += row;
        }
        assert_abs_diff_eq!(mse(&a, &b).unwrap(), total / 6.0, epsilon = 1e-12);
    }
}
