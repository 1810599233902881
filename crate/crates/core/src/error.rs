use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero operator")]
    ZeroOperator,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inconsistent subgradient oracle: f(x) = {value} > 0 with zero subgradient")]
    InconsistentSubgradient { value: f64 },

    #[error("empty operator sequence")]
    EmptySequence,

    #[error("common fixed point witness rejected: residual {residual:e} of operator {index}")]
    MissingWitness { index: usize, residual: f64 },

    #[error(
        "fixed-set equivalence violated: A*(T(Ax) - Ax) vanishes while T(Ax) - Ax = {residual:e}"
    )]
    FixedSetEquivalenceViolated { residual: f64 },

    #[error("extrapolation exceeds tau: sigma = {sigma}, tau = {tau}")]
    ExtrapolationExceedsTau { sigma: f64, tau: f64 },

    #[error("missing oracle: {0}")]
    MissingOracle(&'static str),

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("no valid samples: {0}")]
    NoValidSamples(String),

    #[error("bounded linear regularity not certified: {0}")]
    NotCertified(String),

    #[error("moduli inconsistent: q^2 = {q_squared}")]
    ModuliInconsistent { q_squared: f64 },

    #[error("SQNE violation at iteration {iteration}: Fejer slack {slack:e}")]
    SqneViolation { iteration: usize, slack: f64 },

    #[error("insufficient usable iterations: need {needed}, have {available}")]
    InsufficientIterations { needed: usize, available: usize },

    #[error("instance invariant `{invariant}` violated: {detail}")]
    InstanceInvariant {
        invariant: &'static str,
        detail: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
