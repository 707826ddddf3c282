use std::path::PathBuf;
use std::sync::Arc;

/// Errors raised by the estimators, samplers and I/O helpers.
///
/// Per-point failures (for example a singleton point under an ε-ball
/// neighborhood) are stored alongside successful results, so the type is
/// `Clone`.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("all least-squares weights are zero")]
    AllWeightsZero,

    #[error("{path}: row {row} has {found} columns, expected {expected}")]
    RaggedRows {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: line {line}: cannot parse {token:?} as a real number")]
    Parse {
        path: PathBuf,
        line: usize,
        token: String,
    },
    #[error("{0}: file contains no data rows")]
    EmptyFile(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] Arc<std::io::Error>),

    #[error("noise scale must be nonnegative, got {0}")]
    NegativeScale(f64),

    #[error("point {0} has no neighbors in its neighborhood")]
    SingletonPoint(usize),
    #[error("requested {requested} neighbors but the cloud only has {available} other points")]
    InsufficientPoints { requested: usize, available: usize },
    #[error("cloud has a single point, no neighbor exists")]
    NoNeighbors,
    #[error("point {index}: neighborhood spans {rank} directions, need {needed}")]
    DegenerateNeighborhood {
        index: usize,
        rank: usize,
        needed: usize,
    },
    #[error("operation requires codimension 1, got {0}")]
    CodimensionNotOne(usize),
    #[error("point {index}: {found} usable neighbors, need at least {needed}")]
    InsufficientNeighbors {
        index: usize,
        found: usize,
        needed: usize,
    },

    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot summarize an empty list")]
    Empty,
    #[error("column {0:?} not found")]
    MissingColumn(String),

    #[error("config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(Arc::new(e))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
