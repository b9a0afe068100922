use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by any stage of the forecasting pipeline.
///
/// Variants are grouped by contract: schema/row/config errors mean the input
/// was rejected (CLI exit code 1), IO and internal errors mean the run itself
/// failed (exit code 2).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// CSV header does not match the opportunity schema.
    #[error("schema mismatch: missing columns {missing:?}, unexpected columns {extra:?}")]
    Schema {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    /// A single CSV row failed to parse or validate.
    #[error("row {row}, column `{column}`: {message}")]
    Row {
        /// 1-based data-row index (header excluded).
        row: usize,
        column: String,
        message: String,
    },

    /// Two records share an `opportunity_id`.
    #[error("duplicate opportunity_id `{id}` at row {row}")]
    DuplicateId { id: String, row: usize },

    /// A record violates an operation's precondition (e.g. an open record
    /// where only closed ones are allowed, or a missing field where complete
    /// records are required).
    #[error("invalid record `{id}`: {message}")]
    Record { id: String, message: String },

    /// A configuration value is out of its documented domain.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Array or matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A numeric operation left its domain (e.g. non-positive hessian total).
    #[error("numeric domain error: {0}")]
    Numeric(String),

    /// A metric is undefined on the given input (e.g. AUC on one class).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Calibration input lacks one or more required segments.
    #[error("calibration history is missing segments: {0:?}")]
    MissingSegments(Vec<String>),

    /// Model artifact was produced by an incompatible schema version.
    #[error("artifact schema version `{found}` is not supported (expected `{expected}`)")]
    SchemaVersion { found: String, expected: String },

    /// Model artifact JSON is malformed; position is carried by serde_json.
    #[error("artifact parse error: {0}")]
    ArtifactParse(#[from] serde_json::Error),

    /// Filesystem failure with the path that caused it.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A pipeline stage failed; wraps the stage name around the cause.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach a pipeline stage name to an error.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// IO error constructor that records the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// `true` when the error means the *input* was rejected rather than the
    /// run failing; drives the CLI exit code (1 vs 2).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Schema { .. }
            | Error::Row { .. }
            | Error::DuplicateId { .. }
            | Error::Record { .. }
            | Error::Config(_)
            | Error::Shape(_)
            | Error::UndefinedMetric(_)
            | Error::MissingSegments(_)
            | Error::SchemaVersion { .. }
            | Error::ArtifactParse(_) => true,
            Error::Numeric(_) | Error::Io { .. } => false,
            Error::Stage { source, .. } => source.is_validation(),
        }
    }
}
