use alloc::string::String;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("softmax row {row} has every entry masked")]
    AllMaskedRow { row: usize },
    #[error("node {node} has zero degree")]
    IsolatedNodeDegreeZero { node: usize },
    #[error("track {track_id}: frame {frame} is not strictly after the previous frame")]
    NonMonotoneFrames { track_id: i64, frame: i64 },
    #[error("row {row}: unknown agent type `{value}`")]
    UnknownAgentType { row: usize, value: String },
    #[error("source rate {source_hz} Hz is not an integer multiple of target rate {target_hz} Hz")]
    NonDivisibleRates { source_hz: f64, target_hz: f64 },
    #[error("no agent present at anchor frame {anchor}")]
    EmptyWindow { anchor: i64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("agent {node} has a non-finite anchor position")]
    NonFinitePosition { node: usize },
    #[error("no loss-eligible nodes")]
    NoEligibleNodes,
    #[error("metric for agent class {0} is missing")]
    MissingClass(&'static str),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },
    #[error("target gradient is not finite at path point {step}")]
    NonDifferentiableTarget { step: usize },
    #[error("operation requires the attention variant, model is {0}")]
    WrongVariant(&'static str),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
}

pub type Result<T> = core::result::Result<T, Error>;
