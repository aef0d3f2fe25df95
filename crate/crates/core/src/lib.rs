//! Misspecified Bayesian learning with endogenous, action-dependent data.
//!
//! An agent repeatedly chooses an action, observes an outcome drawn from a true
//! kernel it does not know, and updates a posterior over a parametric family of
//! subjective kernels that may not contain the truth. Long-run beliefs settle on
//! the Kullback-Leibler projections of the truth induced by the action frequency,
//! and steady-state play is a Berk-Nash equilibrium: a mixed action supported on
//! best replies to a belief that is itself supported on the KL minimizers for that
//! mixed action.
//!
//! The crate provides:
//! - [`model`]: scenario primitives (parameter grids, kernels, payoffs, beliefs)
//!   plus validation and a JSON spec format,
//! - [`inference`]: KL divergences, minimizer sets, Bayesian updating, q-moments,
//! - [`decision`]: expected utilities, best replies, logit choice,
//! - [`equilibrium`]: solvers and verifiers for Berk-Nash equilibria and variants,
//! - [`dynamics`]: seeded simulation of the learning loop and its diagnostics,
//! - [`di`]: the limiting differential inclusion for action frequencies,
//! - [`scenarios`]: parameterized constructors for the worked examples.
//!
//! All numeric code is generic over the scalar type via [`Real`]; the type
//! aliases at the crate root fix `f64`, which is what the CLI and the golden
//! tests use.

// Index loops mirror the table math; negated float comparisons are
// NaN-rejecting guards.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod decision;
pub mod di;
pub mod dynamics;
pub mod equilibrium;
pub mod inference;
pub mod model;
pub mod scenarios;

/// Scalar type for all numeric work: `f32` or `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + core::fmt::Debug
    + core::fmt::Display
    + core::iter::Sum
    + Send
    + Sync
    + 'static
{
    /// Tolerance for "sums to one" checks, scaled to the scalar's precision
    /// (about 1e-12 for `f64`).
    fn unit_tol() -> Self {
        Self::epsilon() * Self::from_f64(4.0e3).unwrap()
    }

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Log of the sum of exponentials, shifted by the max so nothing overflows.
///
/// Returns negative infinity on an empty slice or when every entry is
/// negative infinity.
pub fn log_sum_exp<S: Real>(logs: &[S]) -> S {
    let max = logs
        .iter()
        .fold(S::neg_infinity(), |acc, &x| if x > acc { x } else { acc });
    if max == S::neg_infinity() {
        return S::neg_infinity();
    }
    let sum: S = logs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

pub type Belief = model::Belief<f64>;
pub type MixedAction = model::MixedAction<f64>;
pub type Scenario = model::Scenario<f64>;
pub type GameScenario = model::GameScenario<f64>;
pub type KlReport = inference::KlReport<f64>;
pub type BestReplySet = decision::BestReplySet<f64>;
pub type EquilibriumResult = equilibrium::EquilibriumResult<f64>;
pub type PathRecord = dynamics::PathRecord<f64>;
pub type DiTrajectory = di::DiTrajectory<f64>;
