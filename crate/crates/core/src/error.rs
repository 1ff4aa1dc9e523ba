use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value produced by `{primitive}`")]
    NonFinite { primitive: &'static str },
    #[error("unknown parameter segment `{0}`")]
    UnknownSegment(String),
    #[error("duplicate parameter segment `{0}`")]
    DuplicateSegment(String),
    #[error("domain too large to enumerate: {states} states (limit {limit})")]
    DomainTooLarge { states: u128, limit: u128 },
    #[error("absolute continuity violated: {0}")]
    AbsoluteContinuity(String),
    #[error("conjugate domain violated by {spec} at {detail}")]
    ConjugateDomain { spec: String, detail: String },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("divergence guard tripped at step {step}: |update|_inf = {norm:.3e}")]
    Diverged { step: u64, norm: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported learner cell: {0}")]
    Cell(String),
    #[error("{0}")]
    Invalid(String),
    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
