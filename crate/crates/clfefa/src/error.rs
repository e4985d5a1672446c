//! One error type for the whole crate, grouped by failure family.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // -- data / configuration --
    #[error("NonFiniteInput: {context} contains NaN or Inf")]
    NonFiniteInput { context: String },
    #[error("DimensionMismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: String,
        expected: String,
        got: String,
    },
    #[error("InvalidDataset: {0}")]
    InvalidDataset(String),
    #[error("InvalidHyperParams: {0}")]
    InvalidHyperParams(String),
    #[error("ModeLabelMismatch: {0}")]
    ModeLabelMismatch(String),

    // -- graph --
    #[error("InsufficientNeighbors: row {row} has {finite} finite distances, need at least {needed}")]
    InsufficientNeighbors {
        row: usize,
        finite: usize,
        needed: usize,
    },
    #[error("DegenerateRow: row {row} has no finite distances")]
    DegenerateRow { row: usize },
    #[error("EigenFailure: symmetric eigensolver did not converge (n = {n})")]
    EigenFailure { n: usize },

    // -- numerics --
    #[error("NonFiniteIntermediate: {context}")]
    NonFiniteIntermediate { context: String },
    #[error("NonFinite: {context} at step {step}")]
    NonFinite { context: String, step: usize },

    // -- evaluation --
    #[error("EmptyTrainingSet")]
    EmptyTrainingSet,
    #[error("LengthMismatch: prediction length {pred} vs truth length {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("SplitInfeasible: {0}")]
    SplitInfeasible(String),

    // -- ingest --
    #[error("BadMagic: expected {expected:#010x}, got {got:#010x}")]
    BadMagic { expected: u32, got: u32 },
    #[error("TruncatedPayload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("CountMismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("SubsampleTooLarge: requested {requested} of {available} samples")]
    SubsampleTooLarge { requested: usize, available: usize },
    #[error("RaggedRows: row {row} has {got} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("NonNumericCell: row {row}, column {column}: {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("MissingColumn: no column named {0:?}")]
    MissingColumn(String),

    // -- io / model files --
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("BadModelFile: {0}")]
    BadModelFile(String),
}

impl Error {
    /// Stable machine-readable name of the error variant, used by the CLI
    /// for exit-code mapping and by tests.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonFiniteInput { .. } => "NonFiniteInput",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidDataset(_) => "InvalidDataset",
            Error::InvalidHyperParams(_) => "InvalidHyperParams",
            Error::ModeLabelMismatch(_) => "ModeLabelMismatch",
            Error::InsufficientNeighbors { .. } => "InsufficientNeighbors",
            Error::DegenerateRow { .. } => "DegenerateRow",
            Error::EigenFailure { .. } => "EigenFailure",
            Error::NonFiniteIntermediate { .. } => "NonFiniteIntermediate",
            Error::NonFinite { .. } => "NonFinite",
            Error::EmptyTrainingSet => "EmptyTrainingSet",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::SplitInfeasible(_) => "SplitInfeasible",
            Error::BadMagic { .. } => "BadMagic",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::CountMismatch { .. } => "CountMismatch",
            Error::SubsampleTooLarge { .. } => "SubsampleTooLarge",
            Error::RaggedRows { .. } => "RaggedRows",
            Error::NonNumericCell { .. } => "NonNumericCell",
            Error::MissingColumn(_) => "MissingColumn",
            Error::Io(_) => "Io",
            Error::BadModelFile(_) => "BadModelFile",
        }
    }
}
