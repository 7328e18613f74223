//! Class-by-cluster contingency tables.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::stats::{chi_square_independence, ContingencyResult};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// Classes, sorted.
    pub row_labels: Vec<String>,
    /// Cluster ids present in the labels, ascending.
    pub col_labels: Vec<usize>,
    pub counts: Matrix,
    /// Each row of `counts` divided by its total.
    pub proportions: Matrix,
}

pub fn contingency(class_labels: &[String], cluster_labels: &[usize]) -> Result<ContingencyTable> {
    if class_labels.len() != cluster_labels.len() {
        return Err(Error::LengthMismatch(
            class_labels.len(),
            cluster_labels.len(),
        ));
    }
    let rows: Vec<String> = class_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cols: Vec<usize> = cluster_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut counts = Matrix::zeros(rows.len(), cols.len());
    for (class, cluster) in class_labels.iter().zip(cluster_labels) {
        let i = rows.binary_search(class).unwrap_or_else(|_| unreachable!());
        let j = cols
            .binary_search(cluster)
            .unwrap_or_else(|_| unreachable!());
        counts.as_mut_slice()[i * cols.len() + j] += 1.0;
    }
    let mut proportions = counts.clone();
    for i in 0..rows.len() {
        let row = proportions.row_mut(i);
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(ContingencyTable {
        row_labels: rows,
        col_labels: cols,
        counts,
        proportions,
    })
}

impl ContingencyTable {
    pub fn n(&self) -> f64 {
        self.counts.as_slice().iter().sum()
    }

    pub fn chi_square(&self) -> Result<ContingencyResult> {
        chi_square_independence(&self.counts)
    }

    /// Per class: the most populated cluster (lowest id on ties) and the
    /// fraction of the class it holds.
    pub fn modal_clusters(&self) -> Vec<(usize, f64)> {
        self.proportions
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for (j, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = j;
                    }
                }
                (self.col_labels[best], row[best])
            })
            .collect()
    }
}
