//! Robust scheduling of a critically loaded multiclass single-server queue.
//!
//! The crate bundles three layers:
//!
//! 1. an exact discrete-event simulator for the n-th queueing system under
//!    dynamic-priority policies (the generalized c-mu rule among them) with
//!    adversarially perturbed arrival and service intensities
//!    ([`prelimit`]),
//! 2. an Euler simulator for the heavy-traffic limit, a controlled diffusion
//!    reflected through the one-dimensional Skorokhod map and steered along
//!    the minimizing workload curve ([`limit_game`], [`skorokhod`],
//!    [`curve`]), and
//! 3. study drivers that estimate robust costs on both levels and track how
//!    the prelimit value approaches the limit value as the scale parameter
//!    grows ([`harness`]).
//!
//! Robustness means the cost is a supremum over intensity perturbations:
//! each candidate model is priced by a divergence penalty built from the
//! log likelihood-ratio processes of the perturbed point processes
//! ([`adversary`]).
//!
//! All numerics are generic over the floating-point scalar through
//! [`Scalar`]; `f64` aliases for the main types live at the crate root.

// validation deliberately writes `!(v > 0)` so NaN parameters are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// simulators index several parallel arrays per class; iterator zips would
// obscure the stride arithmetic
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

pub mod adversary;
pub mod curve;
pub mod error;
pub mod harness;
pub mod limit_game;
pub mod model;
pub mod prelimit;
pub mod rng;
pub mod skorokhod;

pub use error::{Error, Result};

use core::fmt::{Debug, Display};
use core::iter::Sum;
use num_traits::{Float, FromPrimitive, NumAssign};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};

/// Floating-point scalar the numerical core is generic over.
///
/// `f32` and `f64` implement it. Sampling hooks live on the trait because
/// the standard distributions are only defined for the concrete float types.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Draw a standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
    /// Draw a unit-rate exponential variate.
    fn standard_exp<R: Rng + ?Sized>(rng: &mut R) -> Self;
    /// Draw a uniform variate on the open interval (0, 1).
    fn unit_open<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion to `f64`, mainly for diagnostics and CSV output.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    fn standard_exp<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Exp1.sample(rng)
    }
    fn unit_open<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Open01.sample(rng)
    }
}

impl Scalar for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    fn standard_exp<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Exp1.sample(rng)
    }
    fn unit_open<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Open01.sample(rng)
    }
}

/// Cast an `f64` literal into the working scalar type.
///
/// Panics only if the target type cannot represent any finite `f64`, which
/// does not happen for the provided implementations.
pub fn scalar<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal converts into the scalar type")
}

// Concrete `f64` aliases for the public surface.
pub type SystemConfig64 = model::SystemConfig<f64>;
pub type ScaledRates64 = model::ScaledRates<f64>;
pub type CostModel64 = model::CostModel<f64>;
pub type DivergenceModel64 = model::DivergenceModel<f64>;
pub type Discount64 = model::Discount<f64>;
pub type ModelBundle64 = model::ModelBundle<f64>;
pub type CurveSolution64 = curve::CurveSolution<f64>;
pub type CurveTable64 = curve::CurveTable<f64>;
pub type SampledPath64 = skorokhod::SampledPath<f64>;
pub type AdversaryStrategy64 = adversary::AdversaryStrategy<f64>;
pub type RnExponent64 = adversary::RnExponent<f64>;
pub type CostEstimate64 = limit_game::CostEstimate<f64>;
pub type LimitPaths64 = limit_game::LimitPaths<f64>;
pub type EventLog64 = prelimit::EventLog<f64>;
pub type ScaledTrajectory64 = prelimit::ScaledTrajectory<f64>;
pub type StudySpec64 = harness::StudySpec<f64>;
