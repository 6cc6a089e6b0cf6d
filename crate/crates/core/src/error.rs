use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },

    #[error("root not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    InvalidBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("post is extinct (no live copies left to forward)")]
    ExtinctPost,

    #[error("no news limit cycle: {0}")]
    NoCycle(String),

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("equilibrium root {root} lies outside (0, {upper}]")]
    InconsistentRoot { root: f64, upper: f64 },

    #[error("operation expects scenario {expected}, got {got}")]
    WrongScenario { expected: &'static str, got: &'static str },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("simulation failed for every candidate level in segment {segment}")]
    FitFailed { segment: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
