use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("missing section `{0}`")]
    MissingSection(&'static str),

    #[error("unknown {kind} `{name}`")]
    UnknownSymbol { kind: &'static str, name: String },

    #[error("{0}")]
    InvalidModel(String),

    #[error("row {row} sums to {sum} (expected 1)")]
    RowSum { row: String, sum: f64 },

    #[error("negative entry {value} at {location}")]
    NegativeEntry { location: String, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("distance matrix is not a metric: {0}")]
    NotAMetric(String),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("observation {observation} has zero likelihood under the predicted state law")]
    ZeroLikelihood { observation: usize },

    #[error("policy returned an invalid action distribution: {0}")]
    InvalidPolicy(String),

    #[error("kernel is not mixing: column {column} has min 0 and max {max}")]
    NonMixing { column: usize, max: f64 },

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("bound inapplicable: contraction factor {factor} >= 1 ({what})")]
    ContractivityViolated { what: &'static str, factor: f64 },

    #[error("prior is not absolutely continuous w.r.t. the reference prior (state {state})")]
    AbsoluteContinuityViolation { state: usize },

    #[error("grid with {size} representatives exceeds the cap of {cap}")]
    GridTooLarge { size: u128, cap: usize },

    #[error("solver did not converge within {iterations} iterations (last change {last_change})")]
    IterationCap { iterations: usize, last_change: f64 },

    #[error("ergodicity violated: {0}")]
    ErgodicityViolation(String),

    #[error("uniform window bound requested without alpha_z")]
    MissingAlphaZ,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl Error {
    /// True for errors that signal a violated modelling assumption rather than bad input.
    pub fn is_assumption_violation(&self) -> bool {
        matches!(
            self,
            Error::NonMixing { .. }
                | Error::AssumptionViolated(_)
                | Error::ContractivityViolated { .. }
                | Error::ErgodicityViolation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
