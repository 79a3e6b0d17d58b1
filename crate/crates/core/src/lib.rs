//! Exact computations around sums of fractions with coprimality
//! constraints, moments of reduced residues in short intervals, and the
//! singular-series identities that connect them.

pub mod arith;
pub mod error;
pub mod fracsolve;
pub mod moments;
pub mod partitions;
pub mod relgcd;
pub mod singular;

pub use error::{Error, Result};
