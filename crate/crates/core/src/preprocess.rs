//! log1p, highly-variable-gene selection and per-gene z-scoring.
//!
//! Order is fixed: [`log1p_transform`] -> [`select_hvg`] -> [`standardize`].

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::data::ExpressionMatrix;
use crate::{Error, Matrix, Result};

/// Divisor used for variances: `n` (population) or `n - 1` (sample).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceConvention {
    #[default]
    Population,
    Sample,
}

impl VarianceConvention {
    fn divisor(self, n: usize) -> f64 {
        match self {
            Self::Population => n as f64,
            Self::Sample => n.saturating_sub(1).max(1) as f64,
        }
    }
}

/// Column means and variances, summed in row order.
pub fn column_moments(m: &Matrix, conv: VarianceConvention) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows();
    let mut mean = alloc::vec![0.0; m.cols()];
    for row in m.row_iter() {
        for (acc, x) in mean.iter_mut().zip(row) {
            *acc += x;
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    let mut var = alloc::vec![0.0; m.cols()];
    for row in m.row_iter() {
        for ((acc, x), mu) in var.iter_mut().zip(row).zip(&mean) {
            *acc += (x - mu) * (x - mu);
        }
    }
    let d = conv.divisor(n);
    for v in &mut var {
        *v /= d;
    }
    (mean, var)
}

pub fn log1p_transform(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    let v = m.values();
    for i in 0..v.rows() {
        for (j, &x) in v.row(i).iter().enumerate() {
            if x < 0.0 || x.is_nan() {
                return Err(Error::NegativeInput {
                    row: i,
                    col: j,
                    value: x,
                });
            }
        }
    }
    Ok(m.with_values(v.map(libm::log1p)))
}

/// Keeps the `top_n` highest-variance genes, ordered by descending variance
/// (ties by original column index). Zero-variance genes are never kept.
pub fn select_hvg(
    m: &ExpressionMatrix,
    top_n: usize,
    conv: VarianceConvention,
) -> Result<ExpressionMatrix> {
    if top_n == 0 {
        return Err(Error::InvalidConfig("top_n must be at least 1"));
    }
    let (_, var) = column_moments(m.values(), conv);
    let mut order: Vec<usize> = (0..var.len()).filter(|&j| var[j] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::NoVariableGenes);
    }
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    order.truncate(top_n);
    Ok(m.select_genes(&order))
}

/// Z-scored matrix plus the moments needed to undo the scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledMatrix {
    pub sample_ids: Vec<String>,
    pub gene_ids: Vec<String>,
    pub values: Matrix,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub convention: VarianceConvention,
}

impl Deref for ScaledMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.values
    }
}

pub fn standardize(m: &ExpressionMatrix, conv: VarianceConvention) -> Result<ScaledMatrix> {
    let v = m.values();
    let (means, var) = column_moments(v, conv);
    if let Some(j) = var.iter().position(|&s| s <= 0.0 || s.is_nan()) {
        return Err(Error::ZeroVarianceColumn(j));
    }
    let stds: Vec<f64> = var.iter().map(|&s| libm::sqrt(s)).collect();
    let values = Matrix::from_fn(v.rows(), v.cols(), |i, j| (v[(i, j)] - means[j]) / stds[j]);
    Ok(ScaledMatrix {
        sample_ids: m.sample_ids().to_vec(),
        gene_ids: m.gene_ids().to_vec(),
        values,
        means,
        stds,
        convention: conv,
    })
}

/// Full preprocessing chain.
pub fn prepare(
    m: &ExpressionMatrix,
    top_n: usize,
    conv: VarianceConvention,
) -> Result<ScaledMatrix> {
    let logged = log1p_transform(m)?;
    let hvg = select_hvg(&logged, top_n, conv)?;
    standardize(&hvg, conv)
}
