use std::path::PathBuf;

use domshift_core::divergence::DivergenceError;
use domshift_core::embedding::EmbeddingError;
use domshift_core::grouping::GroupingError;
use domshift_core::image_stats::StatsError;
use domshift_core::metadata::MetadataError;
use domshift_core::metrics::MetricsError;
use domshift_core::tsne::TsneError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("data: {0}")]
    Data(String),
    #[error("network: {0}")]
    Network(String),
    #[error("schema drift: {0}")]
    SchemaDrift(String),
}

impl CliError {
    /// 0 ok, 1 usage/config, 2 data, 3 network.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Io { .. } | CliError::Data(_) | CliError::SchemaDrift(_) => 2,
            CliError::Network(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error!(
    MetadataError,
    GroupingError,
    StatsError,
    DivergenceError,
    EmbeddingError,
    TsneError,
    MetricsError,
    csv::Error,
    image::ImageError,
    domshift_core::image::ImageError
);

pub type Result<T> = std::result::Result<T, CliError>;
