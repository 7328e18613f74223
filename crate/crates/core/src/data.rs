//! Expression matrices with sample/gene identifiers and optional class labels.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// Samples x genes expression values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    sample_ids: Vec<String>,
    gene_ids: Vec<String>,
    values: Matrix,
    class_labels: Option<Vec<String>>,
}

fn check_unique(ids: &[String], dup: fn(String) -> Error) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(dup(id.clone()));
        }
    }
    Ok(())
}

impl ExpressionMatrix {
    pub fn new(sample_ids: Vec<String>, gene_ids: Vec<String>, values: Matrix) -> Result<Self> {
        if values.rows() != sample_ids.len() || values.cols() != gene_ids.len() {
            return Err(Error::ShapeMismatch {
                expected_rows: sample_ids.len(),
                expected_cols: gene_ids.len(),
                rows: values.rows(),
                cols: values.cols(),
            });
        }
        check_unique(&sample_ids, Error::DuplicateSampleId)?;
        check_unique(&gene_ids, Error::DuplicateGeneId)?;
        Ok(Self {
            sample_ids,
            gene_ids,
            values,
            class_labels: None,
        })
    }

    pub fn with_class_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.sample_ids.len() {
            return Err(Error::LengthMismatch(labels.len(), self.sample_ids.len()));
        }
        self.class_labels = Some(labels);
        Ok(self)
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn class_labels(&self) -> Option<&[String]> {
        self.class_labels.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    /// Same ids and labels, new values of identical shape.
    pub(crate) fn with_values(&self, values: Matrix) -> Self {
        debug_assert_eq!(values.shape(), self.values.shape());
        Self {
            sample_ids: self.sample_ids.clone(),
            gene_ids: self.gene_ids.clone(),
            values,
            class_labels: self.class_labels.clone(),
        }
    }

    pub fn select_samples(&self, idx: &[usize]) -> Self {
        Self {
            sample_ids: idx.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            gene_ids: self.gene_ids.clone(),
            values: self.values.select_rows(idx),
            class_labels: self
                .class_labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i].clone()).collect()),
        }
    }

    pub fn select_genes(&self, idx: &[usize]) -> Self {
        Self {
            sample_ids: self.sample_ids.clone(),
            gene_ids: idx.iter().map(|&j| self.gene_ids[j].clone()).collect(),
            values: self.values.select_cols(idx),
            class_labels: self.class_labels.clone(),
        }
    }

    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for c in self.class_labels.iter().flatten() {
            *counts.entry(c.clone()).or_insert(0) += 1;
        }
        counts
    }
}

/// Outcome of joining an expression matrix with a label table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinStats {
    pub n_joined: usize,
    pub dropped_from_data: usize,
    pub dropped_from_labels: usize,
}

/// Inner join on sample id. Output order follows `data`.
pub fn inner_join(
    data: &ExpressionMatrix,
    labels: &[(String, String)],
) -> Result<(ExpressionMatrix, JoinStats)> {
    let mut by_id: BTreeMap<&str, &str> = BTreeMap::new();
    for (id, class) in labels {
        if by_id.insert(id.as_str(), class.as_str()).is_some() {
            return Err(Error::DuplicateSampleId(id.clone()));
        }
    }
    let mut keep = Vec::new();
    let mut classes = Vec::new();
    for (i, id) in data.sample_ids.iter().enumerate() {
        if let Some(class) = by_id.get(id.as_str()) {
            keep.push(i);
            classes.push(String::from(*class));
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptyJoin);
    }
    let stats = JoinStats {
        n_joined: keep.len(),
        dropped_from_data: data.n_samples() - keep.len(),
        dropped_from_labels: labels.len() - keep.len(),
    };
    let joined = data.select_samples(&keep).with_class_labels(classes)?;
    Ok((joined, stats))
}

/// Keeps the samples of one class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortFilter {
    pub class_name: String,
}

impl CohortFilter {
    pub fn new(class_name: impl Into<String>) -> Self {
        Self {
            class_name: class_name.into(),
        }
    }
}

pub fn filter_class(m: &ExpressionMatrix, filter: &CohortFilter) -> Result<ExpressionMatrix> {
    let labels = m.class_labels().ok_or(Error::MissingLabels)?;
    let idx: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == filter.class_name)
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::UnknownClass(filter.class_name.clone()));
    }
    Ok(m.select_samples(&idx))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub nan_count: usize,
    pub inf_count: usize,
    pub negative_count: usize,
}

impl ValidationSummary {
    pub fn is_clean(&self) -> bool {
        self.nan_count == 0 && self.inf_count == 0 && self.negative_count == 0
    }
}

pub fn validate(m: &ExpressionMatrix) -> ValidationSummary {
    let mut s = ValidationSummary::default();
    for &x in m.values.as_slice() {
        if x.is_nan() {
            s.nan_count += 1;
        } else if x.is_infinite() {
            s.inf_count += 1;
            if x < 0.0 {
                s.negative_count += 1;
            }
        } else if x < 0.0 {
            s.negative_count += 1;
        }
    }
    s
}
