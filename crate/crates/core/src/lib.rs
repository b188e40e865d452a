//! Optimal Shewhart change detection for hidden Markov models.
//!
//! The crate builds the two averaged-density Shewhart tests (state-blind and
//! state-aware adversaries), calibrates them to a mean false-alarm period,
//! solves the worst-case prior over hidden states, and checks their worst-case
//! optimality by exact enumeration and seeded Monte-Carlo simulation.

pub mod adversary;
pub mod figure;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod shewhart;
pub mod verify;

pub use model::{
    make_discrete, make_gaussian_ar1, sample_trajectory, ChangeModel, ChangeTime, DiscreteHmm,
    DiscreteModel, GaussianAr1, GaussianAr1Params, ModelError, TrajectoryRecord,
};
pub use numerics::{norm_cdf, norm_quantile, rng_stream, Normal};
