use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{context}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{context}: shape mismatch (expected {expected:?}, found {found:?})")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{context}: non-finite value encountered")]
    NonFinite { context: &'static str },
    #[error("invalid cluster count K={k} for N={n} samples")]
    InvalidK { k: usize, n: usize },
    #[error("feature column {column} has zero variance; standardize or drop it")]
    DegenerateData { column: usize },
    #[error(
        "conv layer {layer}: input length {in_len} too short for kernel width {kernel_width} and stride {stride}"
    )]
    DegenerateGeometry {
        layer: usize,
        in_len: usize,
        kernel_width: usize,
        stride: usize,
    },
    #[error("training diverged after {halvings} learning-rate halvings")]
    TrainingDiverged { halvings: u32 },
    #[error("label {label} at index {index} is outside [0, {k})")]
    LabelOutOfRange { index: usize, label: usize, k: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("cannot place {k} centers at mutual distance {separation}")]
    InfeasibleGeometry { k: usize, separation: f64 },
    #[error("missing result for dataset {dataset}, method {method}")]
    MissingCell { dataset: usize, method: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
