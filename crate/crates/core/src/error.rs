use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("perturbing u_{k} by {delta} breaks convergence of the weight: {reason}")]
    PerturbationBreaksConvergence {
        k: usize,
        delta: String,
        reason: String,
    },

    #[error("{what}: error estimate {estimate} exceeds target {target}")]
    PrecisionUnreachable {
        what: String,
        estimate: String,
        target: String,
    },

    #[error("Hankel determinant of order {n} is not positive at this precision (lower N or raise precision)")]
    HankelSingular { n: usize },

    #[error("discrete Stieltjes breakdown at step {n}: norm underflowed")]
    BreakdownAtStep { n: usize },

    #[error("recurrence backends disagree at n = {n}: relative discrepancy {discrepancy} above {tolerance}")]
    BackendDisagreement {
        n: usize,
        discrepancy: String,
        tolerance: String,
    },

    #[error("entry ({n}, {m}) lies outside the trust window (trust = {trust})")]
    OutsideTrustWindow { n: usize, m: usize, trust: usize },

    #[error("index out of range: {0}")]
    InvalidIndex(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidPotential(_) | Error::Parse(_) | Error::InvalidIndex(_) => 2,
            Error::PerturbationBreaksConvergence { .. } => 2,
            Error::PrecisionUnreachable { .. }
            | Error::HankelSingular { .. }
            | Error::BreakdownAtStep { .. }
            | Error::BackendDisagreement { .. } => 3,
            Error::OutsideTrustWindow { .. } => 5,
        }
    }
}
