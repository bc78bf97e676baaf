use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("branch {branch} has zero series reactance")]
    ZeroReactance { branch: usize },

    #[error("branch {branch} refers to unknown bus {bus}")]
    DanglingBranch { branch: usize, bus: usize },

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("case file has no `mpc.{0}` table")]
    MissingTable(String),

    #[error("bus {bus} has unsupported type code {code}")]
    BadBusType { bus: usize, code: f64 },

    #[error("grid has no slack bus")]
    NoSlack,

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("DC power flow matrix is singular (non-slack island)")]
    SingularBMatrix,

    #[error("power flow label is not converged")]
    UnconvergedLabel,

    #[error("adjacency matrix is not symmetric")]
    AsymmetricInput,

    #[error("no usable sample after {attempts} attempts (sample {sample})")]
    RetryBudgetExhausted { sample: usize, attempts: usize },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("the {0} split is empty")]
    EmptySplit(&'static str),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint holds a {found} model, expected {expected}")]
    ConfigMismatch { found: String, expected: String },

    #[error("target column {0} has zero variance")]
    ZeroVariance(usize),

    #[error("cosine distance of a zero vector")]
    ZeroVector,

    #[error("samples do not share one topology")]
    MixedTopology,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
