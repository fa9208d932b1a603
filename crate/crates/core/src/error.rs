use thiserror::Error;

/// Crate-wide error type. Message prefixes are stable machine-readable codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("profile_too_short: profile covers {have} token positions, arrangement needs {needed}")]
    ProfileTooShort { needed: usize, have: usize },

    #[error("degenerate_bounds: lower {lower} >= upper {upper}")]
    DegenerateBounds { lower: f64, upper: f64 },

    #[error("too_many_partitions: m={m} exceeds n={n}")]
    TooManyPartitions { m: usize, n: usize },

    #[error("bad_partition_count: m must be at least 1")]
    BadPartitionCount,

    #[error("helper_unavailable: chunk {chunk} failed after retries: {source}")]
    HelperUnavailable {
        chunk: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("score_parse_failed: evaluation {eval}: no usable scores in helper reply")]
    ScoreParseFailed { eval: usize },

    #[error("reply_parse_failed: {what}")]
    ReplyParseFailed { what: String },

    #[error("invalid_weight: edge ({element}, {eval}) has non-positive weight {weight}")]
    InvalidWeight {
        element: usize,
        eval: usize,
        weight: f64,
    },

    #[error("underdetermined: p={p} samples for n={n} positions (need p >= n)")]
    Underdetermined { p: usize, n: usize },

    #[error("singular_design: sample matrix is numerically rank-deficient")]
    SingularDesign,

    #[error("backend_unavailable: {reason}")]
    BackendUnavailable { reason: String },

    #[error("http_error: status {status}: {body}")]
    Http { status: u16, body: String },

    #[error("bad_target: node {target} outside [0, {n_nodes})")]
    BadTarget { target: usize, n_nodes: usize },

    #[error("edge_budget_exceeded: generated {edges} edges, cap is {cap}")]
    EdgeBudgetExceeded { edges: usize, cap: usize },

    #[error("unknown_column: {column:?} not in header")]
    UnknownColumn { column: String },

    #[error("malformed_row: line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("bad_config: {0}")]
    Config(String),

    #[error("io_error: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used by the CLI to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            HelperUnavailable { .. } | ScoreParseFailed { .. } | ReplyParseFailed { .. }
            | BackendUnavailable { .. } | Http { .. } => ErrorKind::Backend,
            InvalidWeight { .. } | SingularDesign => ErrorKind::Numeric,
            _ => ErrorKind::Usage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Backend,
    Numeric,
}

pub type Result<T> = std::result::Result<T, Error>;
