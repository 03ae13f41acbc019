//! Safe online control of systems with bounded, unmodelled noise.
//!
//! Policies are learned online (projected gradient descent, or an ensemble
//! of such learners over a step-size grid) while every decision is kept in a
//! set that certifies the next state and the input against time-varying
//! polytopic constraints for all admissible noise. See the guide in `book/`
//! for a walk-through.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ader;
pub mod baselines;
pub mod bench;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod ogd;
pub mod policy;
pub mod polytope;
pub mod projection;
pub mod safeset;
pub mod system;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/safe-sets.md")]
    pub struct SafeSets;
    #[doc = include_str!("../../../book/src/projection.md")]
    pub struct Projection;
    #[doc = include_str!("../../../book/src/safe-ogd.md")]
    pub struct SafeOgd;
    #[doc = include_str!("../../../book/src/safe-ader.md")]
    pub struct SafeAder;
    #[doc = include_str!("../../../book/src/baselines-metrics.md")]
    pub struct BaselinesMetrics;
    #[doc = include_str!("../../../book/src/benchmark.md")]
    pub struct Benchmark;
}
