use thiserror::Error;

/// Failures reported by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point ({x}, {y}) outside the map domain")]
    OutOfDomain { x: f64, y: f64 },
    #[error("orbit escaped at step {step}")]
    OrbitEscaped { step: usize },
    #[error("singular Jacobian at step {step}")]
    SingularJacobian { step: usize },
    #[error("map is not unimodal: derivative has {sign_changes} sign changes")]
    NotUnimodal { sign_changes: usize },
    #[error("normalization failed: second derivative {second_derivative:e} at the critical point")]
    NormalizationFailed { second_derivative: f64 },
    #[error("points {i} and {j} of the critical orbit coincide")]
    TieBreak { i: usize, j: usize },
    #[error("map is not quadratic at its critical point")]
    NonQuadratic,
    #[error("target combinatorics cannot be realized: {0}")]
    TargetUnrealizable(String),
    #[error("family is not full: {0}")]
    FullnessViolation(String),
    #[error("depth limited: return time {return_time} exceeds {limit}")]
    DepthLimited { return_time: usize, limit: usize },
    #[error("leaf seeded at x = {seed} left the field rectangle")]
    LeafEscaped { seed: f64 },
    #[error("curve has no vertical tangency")]
    NoTangency,
    #[error("degenerate tangency: |g''| = {0:e}")]
    Degenerate(f64),
    #[error("periodic strips overlap")]
    StripOverlap,
    #[error("strip {0} is not mapped into its successor")]
    MappingViolation(usize),
    #[error("chart construction failed: {0}")]
    ChartFailure(String),
    #[error("conjugated map is not Henon-like: residual {0:e}")]
    NotHenonLikeAfterChart(f64),
    #[error("sequence has too few levels: need {need}, have {have}")]
    InsufficientDepth { need: usize, have: usize },
    #[error("profile at depth {0} is not renormalizable in one dimension")]
    Not1DRenormalizable(usize),
    #[error("root not bracketed: {0}")]
    RootNotBracketed(String),
    #[error("profile not renormalizable")]
    NotRenormalizable,
    #[error("at ({x}, {y}): {source}")]
    AtPoint { x: f64, y: f64, source: Box<Error> },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// The underlying failure, without point annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtPoint { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn at(self, x: f64, y: f64) -> Error {
        Error::AtPoint { x, y, source: Box::new(self) }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Invalid(e.to_string())
    }
}
