//! Sampling-plan design and exact verification for estimating the
//! proportion `p = M / N` of a finite population.
//!
//! The crate covers three sampling schemes:
//!
//! * fixed sample size with a mixed absolute/relative error criterion
//!   ([`fixed_size`]),
//! * inverse sampling, which draws until `r` units with the attribute have
//!   been seen or the population is exhausted ([`inverse`]),
//! * multistage sampling that yields a fixed-width confidence interval with
//!   exactly verified coverage ([`multistage`]).
//!
//! Everything probabilistic is generic over a [`Probability`] scalar. The
//! floating-point implementations (`f32`, `f64`) evaluate hypergeometric
//! terms in log space; [`ExactProb`] (a big rational) gives ground truth for
//! verification at small and moderate population sizes.

pub mod bounds;
mod error;
pub mod exact;
pub mod fixed_size;
pub mod hypergeom;
pub mod inverse;
pub mod mc;
pub mod multistage;
pub mod report;
mod scalar;

pub use error::{Error, Result};
pub use hypergeom::{EvalMode, HypergeomParams, PopulationSpec};
pub use scalar::Probability;

/// Default floating-point probability type (log-space evaluation).
pub type Prob = f64;

/// Exact probability type: a reduced ratio of big integers.
pub type ExactProb = num_rational::BigRational;

/// Version tag written into every serialized plan and report.
pub const SCHEMA_VERSION: u32 = 1;
