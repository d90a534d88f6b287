use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("({0}, {1}) is not a coprime pair")]
    NotPrime(u64, u64),
    #[error("no expansion factors within bound {bound}")]
    SearchExhausted { bound: u64 },
    #[error("infeasible mesh: {0}")]
    InfeasibleMesh(String),
    #[error("incompatible endpoint multiplicities: {0}")]
    IncompatibleEndpoints(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("elements belong to different algebras")]
    ParentMismatch,
    #[error("boundary violation: residual {0:e}")]
    BoundaryViolation(f64),
    #[error("morphisms do not chain: {0}")]
    ChainMismatch(String),
    #[error("path is not monotone nondecreasing")]
    NonMonotonePath,
    #[error("path is not strictly increasing, pushforward has an atom")]
    AtomicPushforward,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("family sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("round {round}: defect {defect:e} exceeds budget {budget:e}")]
    BudgetExceeded { round: usize, defect: f64, budget: f64 },
    #[error("malformed certificate: {0}")]
    MalformedCertificate(String),
    #[error("element is not approximately unitary: {0:e}")]
    NotApproximatelyUnitary(f64),
    #[error("unsupported morphism word: {0}")]
    UnsupportedWord(String),
    #[error("not serializable: {0}")]
    NotSerializable(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("json: {0}")]
    Json(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
