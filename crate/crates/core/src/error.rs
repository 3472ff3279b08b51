use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    #[error("{func} did not converge: {detail}")]
    Convergence { func: &'static str, detail: String },

    #[error("tolerance not met: error estimate {estimate:e} exceeds target {target:e}")]
    Tolerance { estimate: f64, target: f64 },

    #[error("convexity sign is not constant on [{lo}, {hi}]")]
    Convexity { lo: f64, hi: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("separation {ds} outside the surrogate range [0, {max}]")]
    Range { ds: f64, max: f64 },

    #[error("residual power budget is negative ({0:e})")]
    InfeasibleResidual(f64),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        func,
        detail: detail.into(),
    }
}

pub(crate) fn no_convergence(func: &'static str, detail: impl Into<String>) -> Error {
    Error::Convergence {
        func,
        detail: detail.into(),
    }
}
