use alloc::boxed::Box;
use alloc::string::String;

use crate::autoencoder::AutoencoderModel;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("duplicate sample id `{0}`")]
    DuplicateSampleId(String),
    #[error("duplicate gene id `{0}`")]
    DuplicateGeneId(String),
    #[error("gene `{0}` not found")]
    UnknownGene(String),
    #[error("no sample ids in common between data and labels")]
    EmptyJoin,
    #[error("class `{0}` matches no samples")]
    UnknownClass(String),
    #[error("matrix carries no class labels")]
    MissingLabels,
    #[error("negative input value {value} at ({row}, {col})")]
    NegativeInput { row: usize, col: usize, value: f64 },
    #[error("no gene has non-zero variance")]
    NoVariableGenes,
    #[error("column {0} has zero variance")]
    ZeroVarianceColumn(usize),
    #[error("invalid autoencoder dimensions: {0}")]
    InvalidDims(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        /// Parameters from the last epoch whose losses were finite.
        checkpoint: Option<Box<AutoencoderModel>>,
    },
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("k = {k} is invalid for {n} samples")]
    KTooLarge { k: usize, n: usize },
    #[error("only {distinct} distinct points, cannot form {k} clusters")]
    DegenerateData { distinct: usize, k: usize },
    #[error("at least two non-empty clusters are required")]
    SingleCluster,
    #[error("clusters {0} and {1} have coincident centroids")]
    CoincidentCentroids(usize, usize),
    #[error("cost matrix is {rows}x{cols}, expected square")]
    NonSquare { rows: usize, cols: usize },
    #[error("cost matrix contains a non-finite entry")]
    NonFinite,
    #[error("label {label} out of range for k = {k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("p-value {0} outside [0, 1]")]
    OutOfRangeP(f64),
    #[error("contingency table has an all-zero row or column")]
    ZeroMarginal,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cluster {cluster} too small: {in_cluster} in, {out_cluster} out (need >= 2 each)")]
    ClusterTooSmall {
        cluster: usize,
        in_cluster: usize,
        out_cluster: usize,
    },
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(&'static str),
}
