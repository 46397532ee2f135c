//! Exact arithmetic for Anderson modules over A = Fq[t].
//!
//! The crate is organized bottom-up:
//!
//! - [`ff`]: small finite fields F_{p^n} with deterministic moduli.
//! - [`polyfq`]: univariate polynomials over Fq, primes of Fq[t] and their
//!   residue fields.
//! - [`ratfun`]: rational functions in t and theta over the perfect closure,
//!   plus the text grammar used by manifests and reports.
//! - [`cinfty`]: truncated Puiseux series at the infinite place, with norm
//!   certificates, Newton solvers and Artin-Schreier equations.
//! - [`tate`]: restricted power series in t and their p-adic counterparts at
//!   a prime of Fq[t].
//! - [`hyperderiv`]: hyperderivations, Taylor expansions at a prime and
//!   change of derivation variable.
//! - [`ore`]: twisted polynomials, two-sided division, matrix
//!   diagonalization with certificates, motive ranks and torsion counts.
//! - [`anderson`]: Anderson modules, exponentials, special functions,
//!   torsion extraction and rigid analytic trivializations.

pub mod anderson;
pub mod cinfty;
pub mod ff;
pub mod hyperderiv;
pub mod ore;
pub mod polyfq;
pub mod ratfun;
pub mod tate;

use thiserror::Error;

/// Errors shared across the crate. Operations that can fail return
/// `Result<T>`; internal invariant violations panic instead.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    /// A modulus offered as a prime of Fq[t] has a proper factor.
    #[error("polynomial is not irreducible: divisible by {factor}")]
    NotIrreducible { factor: String },
    /// A series computation ran out of known digits before it could certify
    /// the requested property.
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    /// Division by a value certified to be zero.
    #[error("division by zero")]
    DivisionByZero,
    /// A Newton iteration failed its runtime contraction check.
    #[error("no contraction: {0}")]
    NoContraction(String),
    /// The constant coefficient matrix of an additive system is singular.
    #[error("singular input: {0}")]
    SingularInput(String),
    /// The denominator is not a unit at the prime.
    #[error("not a unit at the prime: {0}")]
    NotLocalUnit(String),
    /// The first hyperderivative of the new variable vanishes at the prime.
    #[error("variable does not separate at the prime")]
    NotSeparating,
    /// A unit test could neither certify zero nor nonzero.
    #[error("indeterminate at current precision: {0}")]
    Indeterminate(String),
    /// Module data does not define an Anderson module.
    #[error("not an Anderson module: {0}")]
    NotAndersonModule(String),
    /// A torsion count came out non-integral; this indicates corrupt input.
    #[error("non-integral rank: {0}")]
    NonIntegralRank(String),
    /// An exponential series evaluation failed to converge.
    #[error("exponential series diverges at the given point")]
    Divergent,
    /// The requested branch index is not a valid Fq^x scaling.
    #[error("invalid branch index {0}")]
    BranchInvalid(u32),
    /// Extracted torsion degenerated (the traced point is below margin).
    #[error("degenerate torsion: {0}")]
    DegenerateTorsion(String),
    /// The candidate trivialization matrix is not invertible.
    #[error("singular trivialization: {0}")]
    SingularTrivialization(String),
    /// The motive is not free at the prime.
    #[error("motive is not free at the prime: {0}")]
    NotFreeAtPrime(String),
    /// An iteration exceeded its stabilization cap.
    #[error("algorithm failure: {0}")]
    AlgorithmFailure(String),
    /// Input outside the validated parameter range.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A valid request outside the implemented range.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
