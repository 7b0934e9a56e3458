use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (Cholesky failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("unknown feature id {0}")]
    UnknownFeature(usize),
    #[error("count increment must be positive")]
    ZeroIncrement,
    #[error("noise standard deviation must be positive, got {0}")]
    InvalidNoise(f64),
    #[error("feature pool must contain at least one vector of positive dimension")]
    EmptyPool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("rate vector has {found} entries, scenario expects {expected}")]
    IndexMismatch { expected: usize, found: usize },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unsupported topology kind `{0}`")]
    UnsupportedKind(String),
    #[error("topology file parse error at line {line}: {msg}")]
    FileParse { line: usize, msg: String },
    #[error("config error at `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Design(#[from] DesignError),
}

impl NetError {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        NetError::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("inconsistent LP dimensions: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("invalid Poisson rate {0}")]
    InvalidRate(f64),
    #[error("invalid estimator parameters: {0}")]
    InvalidParams(String),
    #[error("instance too large for exact summation: {0}")]
    InstanceTooLarge(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Design(#[from] DesignError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
}
