//! Numerical kernels for stability-aware rare-subtype discovery in bulk
//! expression data.
//!
//! The pipeline is: log1p + highly-variable-gene selection + z-scoring
//! ([`preprocess`]), a dense autoencoder trained with Adam ([`autoencoder`]),
//! k-means with silhouette / Davies–Bouldin model selection ([`clustering`]),
//! multi-seed Jaccard stability with Hungarian label alignment
//! ([`stability`]), and cluster-vs-rest differential expression
//! ([`diffexpr`]) on top of the test statistics in [`stats`].
//!
//! The crate is `no_std` with `alloc`. Enable the `std` feature to get
//! `std::error::Error` impls and runtime CPU feature detection in the
//! matrix kernels.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autoencoder;
pub mod clustering;
pub mod contingency;
pub mod data;
pub mod diffexpr;
mod error;
pub mod matrix;
pub mod preprocess;
pub mod projection;
pub mod rng;
pub mod stability;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
