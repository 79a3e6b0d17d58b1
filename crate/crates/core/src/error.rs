use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("denominator must be positive")]
    ZeroDenominator,

    #[error("{what} must be at least {min}, got {value}")]
    BelowMinimum {
        what: &'static str,
        value: i128,
        min: i128,
    },

    #[error("{what} = {value} exceeds the cap {cap}")]
    AboveCap {
        what: &'static str,
        value: u128,
        cap: u128,
    },

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),

    #[error("{0} is not squarefree")]
    NotSquarefree(u64),

    #[error("{0} is not prime")]
    NotPrime(u64),

    #[error("tuple must be non-empty")]
    EmptyTuple,

    #[error("inexact division in {0}")]
    InexactDivision(&'static str),

    #[error("{what}: estimated work {estimate} exceeds budget {budget}")]
    BudgetExceeded {
        what: &'static str,
        estimate: u128,
        budget: u128,
    },

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("precision breach: imaginary part {imag:e} against real part {real:e}")]
    PrecisionBreach { real: f64, imag: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
