//! Two-component PCA of latent codes for scatter plots.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::matrix::{dist, Op};
use crate::{Error, Matrix, Result};

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// `n x 2` scores.
    pub coords: Matrix,
    /// `d x 2`; each column has its largest-magnitude entry positive.
    pub loadings: Matrix,
    pub explained_variance: [f64; 2],
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and eigenvectors as columns, unsorted.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let d = a.rows();
    if a.cols() != d {
        return Err(Error::NonSquare {
            rows: d,
            cols: a.cols(),
        });
    }
    let mut a = a.clone();
    let mut v = Matrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 });
    let scale: f64 = a.as_slice().iter().map(|x| x * x).sum();
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..d {
            for q in p + 1..d {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    let values = (0..d).map(|i| a[(i, i)]).collect();
    Ok((values, v))
}

fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let d = a.rows();
    let m = a.as_mut_slice();
    for k in 0..d {
        let (akp, akq) = (m[k * d + p], m[k * d + q]);
        m[k * d + p] = c * akp - s * akq;
        m[k * d + q] = s * akp + c * akq;
    }
    for k in 0..d {
        let (apk, aqk) = (m[p * d + k], m[q * d + k]);
        m[p * d + k] = c * apk - s * aqk;
        m[q * d + k] = s * apk + c * aqk;
    }
    let vm = v.as_mut_slice();
    for k in 0..d {
        let (vkp, vkq) = (vm[k * d + p], vm[k * d + q]);
        vm[k * d + p] = c * vkp - s * vkq;
        vm[k * d + q] = s * vkp + c * vkq;
    }
}

/// Top two principal components of the rows of `z`.
pub fn pca2(z: &Matrix) -> Result<Projection> {
    let (n, d) = z.shape();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if d < 2 {
        return Err(Error::InvalidDims("projection needs at least two columns"));
    }
    let means: Vec<f64> = (0..d)
        .map(|j| z.row_iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centered = Matrix::from_fn(n, d, |i, j| z[(i, j)] - means[j]);
    let mut cov = Matrix::product(&centered, Op::T, &centered, Op::N);
    cov.as_mut_slice()
        .iter_mut()
        .for_each(|c| *c /= (n - 1) as f64);
    let (values, vectors) = symmetric_eigen(&cov)?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let mut loadings = Matrix::zeros(d, 2);
    for (c, &e) in order[..2].iter().enumerate() {
        let col = vectors.column(e);
        let mut lead = 0;
        for (k, x) in col.iter().enumerate() {
            if x.abs() > col[lead].abs() {
                lead = k;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for (k, x) in col.iter().enumerate() {
            loadings.as_mut_slice()[k * 2 + c] = sign * x;
        }
    }
    let coords = Matrix::product(&centered, Op::N, &loadings, Op::N);
    Ok(Projection {
        coords,
        loadings,
        explained_variance: [values[order[0]].max(0.0), values[order[1]].max(0.0)],
    })
}

/// Distance between the centroid of `cluster` and the centroid of the other
/// points, divided by the RMS distance of cluster members to their own
/// centroid. Large values mean a compact, well-separated group.
pub fn separation(points: &Matrix, labels: &[usize], cluster: usize) -> Result<f64> {
    if labels.len() != points.rows() {
        return Err(Error::LengthMismatch(labels.len(), points.rows()));
    }
    let d = points.cols();
    let mut inside = alloc::vec![0.0; d];
    let mut outside = alloc::vec![0.0; d];
    let n_in = labels.iter().filter(|&&l| l == cluster).count();
    let n_out = labels.len() - n_in;
    if n_in == 0 || n_out == 0 {
        return Err(Error::ClusterTooSmall {
            cluster,
            in_cluster: n_in,
            out_cluster: n_out,
        });
    }
    for (row, &l) in points.row_iter().zip(labels) {
        let (acc, cnt) = if l == cluster {
            (&mut inside, n_in)
        } else {
            (&mut outside, n_out)
        };
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x / cnt as f64;
        }
    }
    let spread = points
        .row_iter()
        .zip(labels)
        .filter(|(_, &l)| l == cluster)
        .map(|(r, _)| {
            let e = dist(r, &inside);
            e * e
        })
        .sum::<f64>()
        / n_in as f64;
    let gap = dist(&inside, &outside);
    let radius = libm::sqrt(spread);
    Ok(if radius == 0.0 {
        if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        gap / radius
    })
}
