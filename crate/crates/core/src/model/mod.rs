//! The hidden-Markov change model and trajectory simulation.
//!
//! Before the change the observations are i.i.d. from `f∞` and the hidden
//! chain moves with `g∞`; after it, `ξ_t ~ f₀(·|z_t)` and the chain moves with
//! `g₀`. The initial state `z₀` is always drawn from the stationary law of
//! `g∞`.

mod discrete;
mod gaussian;

use std::fmt::Debug;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use discrete::{make_discrete, random_discrete_model, DiscreteHmm, DiscreteModel};
pub use gaussian::{make_gaussian_ar1, GaussianAr1, GaussianAr1Params};

/// Tolerance for construction-time normalization checks on continuous models.
pub const CONTINUOUS_CHECK_TOL: f64 = 1e-8;
/// Tolerance for row sums and stationarity of finite models.
pub const DISCRETE_CHECK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("invalid `{key}`{}: {reason}", row.map(|r| format!(" row {r}")).unwrap_or_default())]
    Validation {
        key: &'static str,
        row: Option<usize>,
        reason: String,
    },
    #[error("malformed model document: {0}")]
    Parse(String),
}

/// Change time `τ`. `Never` encodes a purely nominal trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChangeTime {
    At(u64),
    Never,
}

impl ChangeTime {
    /// Whether time `t` still follows the nominal regime (`t <= τ`).
    #[inline]
    pub fn is_nominal(self, t: u64) -> bool {
        match self {
            ChangeTime::At(tau) => t <= tau,
            ChangeTime::Never => true,
        }
    }
}

/// Densities and samplers of a change model. Discrete models report
/// probability masses where continuous ones report densities.
pub trait ChangeModel: Send + Sync {
    type State: Copy + Debug + PartialEq + Send + Sync;
    type Obs: Copy + Debug + PartialEq + Send + Sync;

    /// `f∞(ξ)`
    fn pre_obs_density(&self, x: Self::Obs) -> f64;
    /// `f₀(ξ|z)`
    fn post_obs_density(&self, x: Self::Obs, z: Self::State) -> f64;
    /// `g∞(to|from)`
    fn pre_transition(&self, to: Self::State, from: Self::State) -> f64;
    /// `g₀(to|from)`
    fn post_transition(&self, to: Self::State, from: Self::State) -> f64;
    /// `g∞(z)`, the stationary law of the nominal chain.
    fn stationary_density(&self, z: Self::State) -> f64;

    fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;
    fn sample_pre_transition<R: Rng + ?Sized>(&self, from: Self::State, rng: &mut R) -> Self::State;
    fn sample_post_transition<R: Rng + ?Sized>(&self, from: Self::State, rng: &mut R) -> Self::State;
    fn sample_pre_obs<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Obs;
    fn sample_post_obs<R: Rng + ?Sized>(&self, z: Self::State, rng: &mut R) -> Self::Obs;

    /// Draws from the stationary law conditioned on `distance(z, target) <= band`.
    /// `None` when the event has probability zero.
    fn sample_stationary_near<R: Rng + ?Sized>(
        &self,
        target: Self::State,
        band: f64,
        rng: &mut R,
    ) -> Option<Self::State>;

    /// Distance used by band triggers (`0`/`∞` for finite state spaces).
    fn state_distance(&self, a: Self::State, b: Self::State) -> f64;

    /// Largest deviation from 1 of any density's total mass.
    fn normalization_residual(&self) -> f64;
    /// Largest deviation of `∫ g∞(z'|z) g∞(z) dz` from `g∞(z')`.
    fn stationarity_residual(&self) -> f64;
}

/// One simulated path: `states[t] = z_t` for `t = 0..=H`,
/// `observations[t-1] = ξ_t` for `t = 1..=H`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<S, O> {
    pub tau: ChangeTime,
    pub observations: Vec<O>,
    pub states: Vec<S>,
    pub horizon: usize,
}

pub fn sample_trajectory<M: ChangeModel, R: Rng + ?Sized>(
    model: &M,
    tau: ChangeTime,
    horizon: usize,
    rng: &mut R,
) -> TrajectoryRecord<M::State, M::Obs> {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon);
    let mut z = model.sample_stationary(rng);
    states.push(z);
    for t in 1..=horizon as u64 {
        if tau.is_nominal(t) {
            z = model.sample_pre_transition(z, rng);
            observations.push(model.sample_pre_obs(rng));
        } else {
            z = model.sample_post_transition(z, rng);
            observations.push(model.sample_post_obs(z, rng));
        }
        states.push(z);
    }
    TrajectoryRecord {
        tau,
        observations,
        states,
        horizon,
    }
}
