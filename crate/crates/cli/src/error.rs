use std::path::PathBuf;

/// Errors surfaced by the benchmark runner, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Data(#[from] DataError),
    #[error("{0}")]
    Failed(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Data(_) => 3,
            BenchError::Failed(_) | BenchError::Io { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| BenchError::Io { path, source }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}: row {row}: {message}")]
    Parse { path: PathBuf, row: u64, message: String },
    #[error("{path}: row {row}, column {column:?}: non-numeric feature value {value:?}")]
    NonNumeric {
        path: PathBuf,
        row: u64,
        column: String,
        value: String,
    },
    #[error("{path}: row {row}, column {column:?}: missing value")]
    Missing { path: PathBuf, row: u64, column: String },
    #[error("{path}: label column {column:?} not found")]
    NoLabelColumn { path: PathBuf, column: String },
    #[error("{name}: expected N={}, d={}, K={}; found N={}, d={}, K={}", expected.0, expected.1, expected.2, found.0, found.1, found.2)]
    ShapeMismatch {
        name: String,
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("{name}: {source}")]
    Invalid {
        name: String,
        #[source]
        source: tabcluster_core::Error,
    },
}
