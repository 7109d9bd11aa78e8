use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid Fock cutoff {0}: must be at least 1")]
    InvalidCutoff(usize),

    #[error("unknown mode label `{0}`")]
    UnknownMode(String),

    #[error("partial trace needs at least one mode to keep")]
    EmptyKeepSet,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state fails validation: {0}")]
    InvalidState(String),

    #[error("parameter `{name}` = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("CHSH score {0} exceeds the Tsirelson bound 2*sqrt(2)")]
    NonPhysicalScore(f64),

    #[error("epsilon constraint violated: eps_s' + 2 eps_s'' = {lhs} must be < eps_s = {eps_s}")]
    EpsilonConstraint { lhs: f64, eps_s: f64 },

    #[error(
        "bisection bracket failure: objective has the same sign at {lo} ({f_lo}) and {hi} ({f_hi})"
    )]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    range: &'static str,
) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value, range })
    }
}
