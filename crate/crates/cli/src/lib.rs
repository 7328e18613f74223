//! Batch pipeline around `raresub-core`: CSV/JSON IO, run directories with
//! manifests, SVG figures, and the `raresub` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod figures;
pub mod io;
pub mod manifest;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{Result, RunError};
