use thiserror::Error;

/// Errors raised by distribution construction, evaluation and fitting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate chain: r1 = r2 = 0 leaves the stationary possession undefined")]
    DegenerateChain,

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("parent support exceeds the cap of {cap} points")]
    SupportTooLarge { cap: usize },

    #[error("size {size} exceeds the supported maximum {max}")]
    SizeLimit { size: usize, max: usize },

    #[error("generating function has a pole at z = {z}")]
    Pole { z: f64 },

    #[error("r1 = 0: team-1 scoring intervals are infinite")]
    ZeroScoringRate,

    #[error("normal approximation variance is not positive ({0})")]
    NonPositiveVariance(f64),

    #[error("closed form unavailable for the {0} parent")]
    UnsupportedParent(&'static str),

    #[error("zero modification normalizer {0} is not positive")]
    InvalidModification(f64),

    #[error("convolution recursion needs P1(1) = 1 - r2 > 0")]
    DegenerateInterval,

    #[error("truncation tail mass {0:e} is too large")]
    Truncation(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid data: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}
