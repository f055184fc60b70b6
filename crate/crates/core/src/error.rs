use thiserror::Error;

/// Which end of the feasible rate interval a requested rate violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    /// `2^{2R} <= 1/b`: the power formula yields zero or negative power.
    Lower,
    /// `2^{2R} >= a/c`: no finite power reaches the rate.
    Upper,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid coefficient vector: {0}")]
    InvalidCoefficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid multiplier: {0}")]
    InvalidMultiplier(String),

    #[error("degenerate pair: channel vector is orthogonal to the coefficient vector")]
    DegeneratePair,

    #[error("{}", infeasible_message(*.rate, *.bound, *.side, *.relay))]
    InfeasibleRate {
        rate: f64,
        bound: f64,
        side: BoundSide,
        relay: Option<usize>,
    },

    #[error("selection failure: {0}")]
    SelectionFailure(String),

    #[error("solver did not converge after {iterations} iterations (residuals: {residuals:?})")]
    NonConvergence {
        iterations: usize,
        residuals: Vec<(String, f64)>,
    },
}

fn infeasible_message(rate: f64, bound: f64, side: BoundSide, relay: Option<usize>) -> String {
    let who = relay.map(|r| format!(" at relay {r}")).unwrap_or_default();
    match side {
        BoundSide::Lower => format!(
            "infeasible rate {rate}{who}: at or below the lower bound {bound}, power would be non-positive"
        ),
        BoundSide::Upper => format!(
            "infeasible rate {rate}{who}: at or above the upper bound {bound}, no finite power suffices"
        ),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
