use alloc::string::String;
use core::fmt;

/// Errors raised by the numeric kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Input matrix or vector is empty where data is required.
    EmptyData(String),
    /// A non-finite value reached a kernel that requires finite input.
    NonFinite { context: String },
    /// Vector or matrix dimensions do not line up.
    DimensionMismatch { context: String, left: usize, right: usize },
    /// t2 <= t1 when computing an annualized slope.
    Chronology { t1: f64, t2: f64 },
    /// Denominator H + lambda collapsed to zero in a leaf-weight solve.
    DegenerateLeaf,
    /// A metric is undefined for the given input (e.g. zero variance).
    Undefined(String),
    /// A parameter violates its documented range.
    InvalidParam(String),
    /// Prediction-time feature schema does not match fit-time schema.
    SchemaMismatch(String),
    /// A persisted or constructed model violates an internal invariant.
    ModelIntegrity(String),
    /// Brute-force Shapley enumeration refused: too many features.
    TooManyFeatures { p: usize, max: usize },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::EmptyData(ctx) => write!(f, "empty input: {ctx}"),
            CoreError::NonFinite { context } => write!(f, "non-finite value in {context}"),
            CoreError::DimensionMismatch { context, left, right } => {
                write!(f, "dimension mismatch in {context}: {left} vs {right}")
            }
            CoreError::Chronology { t1, t2 } => {
                write!(f, "chronology error: t2 ({t2}) must be greater than t1 ({t1})")
            }
            CoreError::DegenerateLeaf => write!(f, "degenerate leaf: H + lambda is zero"),
            CoreError::Undefined(what) => write!(f, "undefined: {what}"),
            CoreError::InvalidParam(what) => write!(f, "invalid parameter: {what}"),
            CoreError::SchemaMismatch(what) => write!(f, "feature schema mismatch: {what}"),
            CoreError::ModelIntegrity(what) => write!(f, "model integrity error: {what}"),
            CoreError::TooManyFeatures { p, max } => write!(
                f,
                "exact Shapley enumeration supports at most {max} features, got {p}; \
                 use tree_shap for larger models"
            ),
        }
    }
}

impl core::error::Error for CoreError {}
