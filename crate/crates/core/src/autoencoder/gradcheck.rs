use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AutoencoderModel, Dense};
use crate::Matrix;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely. Central differences
/// at `FD_STEP` carry roundoff near `eps * |f| / FD_STEP`, about 1e-11 here.
const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub n_params: usize,
}

/// Per-entry reconstruction MSE plus `weight_decay / 2 * ||theta||^2`, in
/// evaluation mode. Its gradient is what training follows.
pub fn objective(model: &AutoencoderModel, x: &Matrix, weight_decay: f64) -> f64 {
    let out = model.run(x, 0..model.layers.len());
    let n = (x.rows() * x.cols()) as f64;
    let sse: f64 = out
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let l2: f64 = model
        .layers
        .iter()
        .flat_map(Dense::params)
        .map(|p| p * p)
        .sum();
    sse / n + 0.5 * weight_decay * l2
}

fn analytic(model: &AutoencoderModel, x: &Matrix, weight_decay: f64) -> Vec<f64> {
    let cache = model.forward_train(x, None);
    let (_, grads) = model.backward(&cache, x);
    let mut out = Vec::with_capacity(model.n_params());
    for (g, layer) in grads.iter().zip(&model.layers) {
        for (gi, p) in g.params().zip(layer.params()) {
            out.push(gi + weight_decay * p);
        }
    }
    out
}

fn param_mut(model: &mut AutoencoderModel, mut idx: usize) -> &mut f64 {
    for layer in &mut model.layers {
        let nw = layer.weights.as_slice().len();
        if idx < nw {
            return &mut layer.weights.as_mut_slice()[idx];
        }
        idx -= nw;
        if idx < layer.bias.len() {
            return &mut layer.bias[idx];
        }
        idx -= layer.bias.len();
    }
    panic!("parameter index out of range");
}

/// Compares backpropagated gradients with central finite differences for
/// every parameter. Dropout is not applied.
pub fn gradient_check(model: &AutoencoderModel, x: &Matrix, weight_decay: f64) -> GradCheckReport {
    let grads = analytic(model, x, weight_decay);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, &g) in grads.iter().enumerate() {
        let orig = *param_mut(&mut probe, i);
        *param_mut(&mut probe, i) = orig + FD_STEP;
        let up = objective(&probe, x, weight_decay);
        *param_mut(&mut probe, i) = orig - FD_STEP;
        let down = objective(&probe, x, weight_decay);
        *param_mut(&mut probe, i) = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let denom = g.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max((g - numeric).abs() / denom);
    }
    GradCheckReport {
        max_rel_error: worst,
        n_params: grads.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_with_hidden, AeConfig};
    use super::*;
    use crate::rng::SeededRng;

    fn small(seed: u64, weight_decay: f64) -> (AutoencoderModel, Matrix) {
        let c = AeConfig {
            input_dim: 6,
            latent_dim: 3,
            weight_decay,
            seed,
            ..AeConfig::default()
        };
        let m = build_with_hidden(&c, 5, 4).unwrap();
        let mut rng = SeededRng::new(seed + 100);
        let x = Matrix::from_fn(5, 6, |_, _| rng.normal());
        (m, x)
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let (m, x) = small(1, 1e-5);
        let r = gradient_check(&m, &x, 1e-5);
        assert_eq!(r.n_params, m.n_params());
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn zero_model_on_zero_input_has_zero_gradient() {
        let (mut m, _) = small(2, 0.0);
        for layer in &mut m.layers {
            layer.weights.as_mut_slice().fill(0.0);
        }
        let x = Matrix::zeros(4, 6);
        assert!(analytic(&m, &x, 0.0).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn weight_decay_term_gradient_is_lambda_theta() {
        // With x = 0 and a zero model the loss term vanishes, leaving lambda * theta.
        let (mut m, _) = small(3, 0.0);
        for layer in &mut m.layers {
            layer.weights.as_mut_slice().fill(0.0);
        }
        m.layers[5].weights.as_mut_slice()[0] = 0.7;
        m.layers[4].bias[2] = -0.3;
        let lambda = 0.25;
        let g = analytic(&m, &Matrix::zeros(3, 6), lambda);
        let params: Vec<f64> = m.layers.iter().flat_map(Dense::params).copied().collect();
        for (gi, p) in g.iter().zip(&params) {
            assert_eq!(*gi, lambda * p);
        }
    }
}
