use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cycle detected through node `{node}`")]
    Cycle { node: String },

    #[error("unknown name `{name}` referenced by `{referenced_by}`")]
    DanglingReference { name: String, referenced_by: String },

    #[error("invalid model: {0}")]
    Validation(String),

    #[error("missing input `{0}`")]
    MissingInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dataset does not match model: {0}")]
    SchemaMismatch(String),

    #[error("initial point has non-finite log posterior (node `{node}`)")]
    NonFiniteStart { node: String },

    #[error("invalid sampler configuration: {0}")]
    Config(String),

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("posterior fingerprint {found} does not match model fingerprint {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("target node `{0}` is also observed in the evidence")]
    TargetObserved(String),

    #[error("evidence has zero probability under every posterior draw")]
    AllWeightsZero,

    #[error("invalid evidence: {0}")]
    Evidence(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-binary value `{value}` in column `{column}` at row {row}")]
    NonBinaryValue { row: usize, column: String, value: String },

    #[error("missing value in column `{column}` at row {row}")]
    MissingValue { row: usize, column: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for the errors that reject a model definition.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Cycle { .. } | Error::DanglingReference { .. } | Error::Validation(_)
        )
    }
}
