use std::path::PathBuf;

use raresub_core::Error as CoreError;

pub type Result<T, E = RunError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("missing upstream artifact {0}")]
    MissingUpstream(PathBuf),
    #[error("writing {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Process exit codes.
pub mod exit {
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NUMERIC: u8 = 4;
    pub const OUTPUT: u8 = 5;
}

impl RunError {
    pub fn input(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Input {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Output {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => exit::CONFIG,
            Self::Input { .. } | Self::MissingUpstream(_) => exit::DATA,
            Self::Output { .. } => exit::OUTPUT,
            Self::Core(e) => match e {
                CoreError::InvalidConfig(_)
                | CoreError::InvalidDims(_)
                | CoreError::InfeasibleSpec(_)
                | CoreError::KTooLarge { .. } => exit::CONFIG,
                CoreError::NonFiniteLoss { .. }
                | CoreError::NonFinite
                | CoreError::CoincidentCentroids(..)
                | CoreError::SingleCluster
                | CoreError::OutOfRangeP(_)
                | CoreError::NonSquare { .. }
                | CoreError::LabelOutOfRange { .. } => exit::NUMERIC,
                _ => exit::DATA,
            },
        }
    }
}
