//! Cluster-vs-rest differential expression on standardized data.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::preprocess::ScaledMatrix;
use crate::stats::{bh_fdr, welch_t};
use crate::{Error, Matrix, Result};

/// Upper limit on `-log10(fdr)` in volcano data.
pub const MAX_NEG_LOG10: f64 = 320.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeRow {
    pub gene_id: String,
    /// In-cluster mean minus out-of-cluster mean, in z units.
    pub effect: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub fdr: f64,
}

/// Rows ordered by ascending FDR, then descending `|effect|`, then gene id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeTable {
    pub cluster: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub rows: Vec<DeRow>,
}

fn row_order(a: &DeRow, b: &DeRow) -> Ordering {
    a.fdr
        .total_cmp(&b.fdr)
        .then(b.effect.abs().total_cmp(&a.effect.abs()))
        .then_with(|| a.gene_id.cmp(&b.gene_id))
}

fn membership(labels: &[usize], n: usize, cluster: usize) -> Result<Vec<bool>> {
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    let inside: Vec<bool> = labels.iter().map(|&l| l == cluster).collect();
    let n_in = inside.iter().filter(|&&b| b).count();
    if n_in < 2 || n - n_in < 2 {
        return Err(Error::ClusterTooSmall {
            cluster,
            in_cluster: n_in,
            out_cluster: n - n_in,
        });
    }
    Ok(inside)
}

/// Welch test per gene between `cluster` and all other samples, with BH
/// adjustment over every gene.
pub fn de_cluster_vs_rest(x: &ScaledMatrix, labels: &[usize], cluster: usize) -> Result<DeTable> {
    let inside = membership(labels, x.rows(), cluster)?;
    let n_in = inside.iter().filter(|&&b| b).count();
    let mut a = Vec::with_capacity(n_in);
    let mut b = Vec::with_capacity(x.rows() - n_in);
    let mut tests = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        a.clear();
        b.clear();
        for (row, &is_in) in x.row_iter().zip(&inside) {
            if is_in {
                a.push(row[j])
            } else {
                b.push(row[j])
            }
        }
        tests.push(welch_t(&a, &b)?);
    }
    let p: Vec<f64> = tests.iter().map(|t| t.p_value).collect();
    let fdr = bh_fdr(&p)?;
    let mut rows: Vec<DeRow> = tests
        .iter()
        .zip(&x.gene_ids)
        .zip(fdr)
        .map(|((t, g), q)| DeRow {
            gene_id: g.clone(),
            effect: t.effect,
            t: t.t_stat,
            df: t.df,
            p: t.p_value,
            fdr: q,
        })
        .collect();
    rows.sort_by(row_order);
    Ok(DeTable {
        cluster,
        n_in,
        n_out: x.rows() - n_in,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarkerParams {
    pub fdr_threshold: f64,
    pub per_side: usize,
}

impl Default for MarkerParams {
    fn default() -> Self {
        Self {
            fdr_threshold: 0.05,
            per_side: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerSelection {
    /// Largest positive effects first.
    pub top_up: Vec<String>,
    /// Most negative effects first.
    pub top_down: Vec<String>,
    /// How many slots on each side could not be filled.
    pub shortfall_up: usize,
    pub shortfall_down: usize,
}

impl MarkerSelection {
    pub fn is_empty(&self) -> bool {
        self.top_up.is_empty() && self.top_down.is_empty()
    }
}

pub fn select_markers(table: &DeTable, params: &MarkerParams) -> MarkerSelection {
    let significant = || table.rows.iter().filter(|r| r.fdr < params.fdr_threshold);
    let mut up: Vec<&DeRow> = significant().filter(|r| r.effect > 0.0).collect();
    let mut down: Vec<&DeRow> = significant().filter(|r| r.effect < 0.0).collect();
    up.sort_by(|a, b| {
        b.effect
            .total_cmp(&a.effect)
            .then_with(|| a.gene_id.cmp(&b.gene_id))
    });
    down.sort_by(|a, b| {
        a.effect
            .total_cmp(&b.effect)
            .then_with(|| a.gene_id.cmp(&b.gene_id))
    });
    let take = |v: Vec<&DeRow>| -> Vec<String> {
        v.into_iter()
            .take(params.per_side)
            .map(|r| r.gene_id.clone())
            .collect()
    };
    let (top_up, top_down) = (take(up), take(down));
    MarkerSelection {
        shortfall_up: params.per_side - top_up.len(),
        shortfall_down: params.per_side - top_down.len(),
        top_up,
        top_down,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolcanoPoint {
    pub gene_id: String,
    pub effect: f64,
    pub neg_log10_fdr: f64,
    pub highlighted: bool,
    /// Gene id for highlighted points.
    pub label: Option<String>,
}

/// One point per gene, in table order. A point is highlighted when
/// `fdr < fdr_threshold` and `|effect| >= effect_threshold`.
pub fn volcano_data(
    table: &DeTable,
    fdr_threshold: f64,
    effect_threshold: f64,
) -> Vec<VolcanoPoint> {
    table
        .rows
        .iter()
        .map(|r| {
            let y = if r.fdr <= 0.0 {
                MAX_NEG_LOG10
            } else {
                (0.0 - libm::log10(r.fdr)).clamp(0.0, MAX_NEG_LOG10)
            };
            let highlighted = r.fdr < fdr_threshold && r.effect.abs() >= effect_threshold;
            VolcanoPoint {
                gene_id: r.gene_id.clone(),
                effect: r.effect,
                neg_log10_fdr: y,
                highlighted,
                label: highlighted.then(|| r.gene_id.clone()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapData {
    /// Down-regulated markers, then up-regulated.
    pub gene_ids: Vec<String>,
    pub n_down: usize,
    /// Cluster members in input order, then the remaining samples.
    pub sample_ids: Vec<String>,
    pub n_in: usize,
    /// `genes x samples` z-scores copied from the input.
    pub values: Matrix,
}

pub fn heatmap_data(
    x: &ScaledMatrix,
    labels: &[usize],
    cluster: usize,
    sel: &MarkerSelection,
) -> Result<HeatmapData> {
    let inside = membership(labels, x.rows(), cluster)?;
    if sel.is_empty() {
        return Err(Error::InvalidConfig("no marker genes selected"));
    }
    let gene_ids: Vec<String> = sel.top_down.iter().chain(&sel.top_up).cloned().collect();
    let cols = gene_ids
        .iter()
        .map(|g| {
            x.gene_ids
                .iter()
                .position(|h| h == g)
                .ok_or_else(|| Error::UnknownGene(g.clone()))
        })
        .collect::<Result<Vec<usize>>>()?;
    let order: Vec<usize> = (0..x.rows())
        .filter(|&i| inside[i])
        .chain((0..x.rows()).filter(|&i| !inside[i]))
        .collect();
    let values = Matrix::from_fn(cols.len(), order.len(), |g, s| x[(order[s], cols[g])]);
    Ok(HeatmapData {
        n_down: sel.top_down.len(),
        n_in: inside.iter().filter(|&&b| b).count(),
        sample_ids: order.iter().map(|&i| x.sample_ids[i].clone()).collect(),
        gene_ids,
        values,
    })
}
