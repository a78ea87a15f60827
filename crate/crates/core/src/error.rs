use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error(
        "trajectory crosses the section only {found} times after the transient, {needed} needed"
    )]
    InsufficientEvents { found: usize, needed: usize },
    #[error("trajectory diverged at t = {t}")]
    Diverged { t: f64 },
    #[error("bracket assumption violated: {0}")]
    Bracket(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
