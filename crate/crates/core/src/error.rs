use thiserror::Error;

/// Errors raised by the samplers, path constructions and validation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the range where the law is defined.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// An operation was applied to an argument outside its domain
    /// (for example a size-biased pick from the zero measure).
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical result over- or underflowed.
    #[error("range error: {0}")]
    Range(String),
    /// Two representations of the same object disagree.
    #[error("consistency error: {0}")]
    Consistency(String),
    /// A spindle or path was evaluated somewhere it was not generated.
    #[error("evaluation error: {0}")]
    Evaluation(String),
    /// Malformed serialized input.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_param(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Parameter(msg()))
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    check_param(alpha > 0.0 && alpha < 1.0, || {
        format!("alpha must lie in (0,1), got {alpha}")
    })
}
