//! Error taxonomy shared by all modules.
//!
//! Every failure is attributed to a stage and is loud: no silent fallback to
//! floating point, no silently truncated certification.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    /// A value could not be certified at the working precision (and the
    /// caller's retry budget, if any, is spent).
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    /// Division by a certified exact zero.
    #[error("division by zero: {0}")]
    DivisionByZero(String),

    /// A corner minor s_i of the datum is not certified invertible, so the
    /// anti-diagonal normal form does not exist.
    #[error("datum is not pre-regular: {0}")]
    NotPreRegular(String),

    /// The datum fails the regularity test (Δ = 0 or a Krylov rank drop).
    #[error("datum is not regular: {0}")]
    NotRegular(String),

    /// The characteristic-polynomial datum a is not stable under the twisted
    /// inversion t ↦ t^{-1} composed with conjugation.
    #[error("coefficient datum is not θ-stable: {0}")]
    NotThetaStable(String),

    /// The moment pairing is degenerate (Δ = 0), so the finite quotient is
    /// not defined.
    #[error("degenerate Gram pairing: {0}")]
    DegenerateGram(String),

    /// The fixed-ring descent could not be certified at the working modulus.
    #[error("descent to the fixed ring failed: {0}")]
    DescentFails(String),

    /// An enumeration would exceed the configured cap.
    #[error("enumeration cap exceeded: needed {needed}, cap {cap}")]
    CapExceeded { needed: u128, cap: u64 },

    /// A lattice count changed when the enumeration bound was enlarged.
    #[error("lattice count not bound-stable: {count_b} at B={b} vs {count_b1} at B+1")]
    BoundUnstable { b: i64, count_b: i64, count_b1: i64 },

    /// A linear system that the matching theory promises to be uniquely
    /// solvable was singular (precision failure or non-regular input).
    #[error("matching linear system singular: {0}")]
    LinearSolveSingular(String),

    /// A construction (e.g. the norm-one splitting) ran out of candidates.
    #[error("degenerate construction: {0}")]
    Degenerate(String),

    /// The rejection sampler spent its budget without an acceptable datum.
    #[error("sampling exhausted after {tries} tries: {detail}")]
    SamplingExhausted { tries: u32, detail: String },

    /// Malformed or out-of-range input (CLI exit code 2).
    #[error("input error: {0}")]
    Input(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
