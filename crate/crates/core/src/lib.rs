//! Exact simulation and verification of Markov counting systems whose rates
//! are driven by correlated gamma white noise.
//!
//! The noise is integrated out into closed-form co-jump rates: a family of two
//! transitions sharing one noise fires joint events of sizes `(k1, k2)`.
//! [`cojump`] holds that rate mathematics, [`system`] the generic counting
//! system, [`simulator`] the exact event-driven sampler, [`models`] the
//! bivariate death and two-strain SIR systems, and [`moments`] Monte Carlo
//! estimators plus a quadrature oracle for the time-changed construction.
//!
//! Rate kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the `f64` instantiation used by the simulator.

pub mod binomial;
pub mod cojump;
pub mod error;
pub mod models;
pub mod moments;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod simulator;
pub mod stats;
pub mod system;

pub use cojump::{
    cojump_covariance_closed_form, finite_difference_log, pairwise_cojump_rate,
    theorem1_covariance_by_summation, total_cojump_rate, CoJumpFamily, PrecisionPolicy,
};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use system::{
    apply_jump, marginal_rate, rate_function, CompartmentId, CountVector, JumpEvent, StateVector,
    SystemSpec, TransitionIdx, TransitionType,
};

/// Real type of the simulator and estimators.
pub type Real = f64;
pub type GammaNoise = cojump::GammaNoiseParams<Real>;
pub type RateTable = cojump::PairwiseRateTable<Real>;
pub type GammaNoise32 = cojump::GammaNoiseParams<f32>;
pub type RateTable32 = cojump::PairwiseRateTable<f32>;
