//! Shewhart tests built on averaged post-change densities.
//!
//! Variant 1 averages the post-change observation law over the stationary
//! state distribution; variant 2 averages it over a worst-case prior on the
//! last pre-change state. Each test alarms the first time the likelihood
//! ratio of the current sample against `f∞` reaches its threshold.

pub mod discrete;
pub mod gaussian;
pub mod rules;
pub mod theorems;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::NumericsError;

pub use rules::{MemorylessRule, RuleState, StoppingRule};

/// Relative tolerance used to decide that a likelihood ratio sits on the threshold.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShewhartError {
    #[error("gamma must exceed 1, got {0}")]
    InvalidGamma(f64),
    #[error("cannot reach one-step alarm rate {target:e}: only {available:e} of nominal mass has positive likelihood ratio")]
    Unreachable { target: f64, available: f64 },
    #[error("worst-case prior solver stopped after {iterations} iterations with residual {:e}", residuals.last().copied().unwrap_or(f64::NAN))]
    NoConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },
    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),
    #[error("enumeration found no optimal support")]
    NoSupport,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub(crate) fn check_gamma(gamma: f64) -> Result<(), ShewhartError> {
    if gamma > 1.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(ShewhartError::InvalidGamma(gamma))
    }
}

/// Which averaged density the test is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Stationary average: optimal when the adversary cannot see the state.
    S1,
    /// Worst-case-prior average: optimal when the adversary sees the state.
    S2,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::S1 => "s1",
            Variant::S2 => "s2",
        })
    }
}

/// The observation-space region `|ξ - center| >= radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricRegion {
    pub center: f64,
    pub radius: f64,
}

impl SymmetricRegion {
    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        (x - self.center).abs() >= self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub gamma: f64,
    /// Threshold on the likelihood ratio.
    pub threshold: f64,
    /// Stop probability on the threshold atom.
    pub randomization: f64,
    /// `|E∞[T] - γ| / γ` implied by the achieved one-step alarm rate.
    pub residual: f64,
    /// Equivalent observation-space form, when one exists.
    pub observation_form: Option<SymmetricRegion>,
}

/// Least-favourable distribution of the last pre-change state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCasePrior<S> {
    pub support: Vec<S>,
    pub weights: Vec<f64>,
    pub beta2: f64,
    /// Max over the support of `|detection(z) - beta2|`.
    pub equalization_residual: f64,
    /// Every state gives the same detection probability, so any prior is
    /// worst-case. The stationary law is returned.
    pub degenerate: bool,
}

type ObsFn<O> = Arc<dyn Fn(O) -> f64 + Send + Sync>;

/// A calibrated Shewhart test on observations of type `O`.
#[derive(Clone)]
pub struct ShewhartPolicy<O> {
    pub variant: Variant,
    pub threshold: f64,
    pub randomization: f64,
    pub gamma: f64,
    pub observation_form: Option<SymmetricRegion>,
    likelihood_ratio: ObsFn<O>,
    averaged_density: ObsFn<O>,
    stop_probability: ObsFn<O>,
}

impl<O> fmt::Debug for ShewhartPolicy<O> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShewhartPolicy")
            .field("variant", &self.variant)
            .field("threshold", &self.threshold)
            .field("randomization", &self.randomization)
            .field("gamma", &self.gamma)
            .field("observation_form", &self.observation_form)
            .finish_non_exhaustive()
    }
}

impl<O: Copy> ShewhartPolicy<O> {
    pub(crate) fn new(
        variant: Variant,
        calibration: &CalibrationResult,
        likelihood_ratio: ObsFn<O>,
        averaged_density: ObsFn<O>,
        stop_probability: ObsFn<O>,
    ) -> Self {
        Self {
            variant,
            threshold: calibration.threshold,
            randomization: calibration.randomization,
            gamma: calibration.gamma,
            observation_form: calibration.observation_form,
            likelihood_ratio,
            averaged_density,
            stop_probability,
        }
    }

    /// `L_j(ξ) = f̄₀ʲ(ξ) / f∞(ξ)`
    pub fn likelihood_ratio(&self, x: O) -> f64 {
        (self.likelihood_ratio)(x)
    }

    /// `f̄₀ʲ(ξ)`
    pub fn averaged_density(&self, x: O) -> f64 {
        (self.averaged_density)(x)
    }

    /// Probability of alarming on observation `x`: 1 above the threshold,
    /// `q` on it, 0 below.
    pub fn stop_probability(&self, x: O) -> f64 {
        (self.stop_probability)(x)
    }

    /// One step of the test.
    #[inline]
    pub fn fires<R: RngCore + ?Sized>(&self, x: O, rng: &mut R) -> bool {
        let p = self.stop_probability(x);
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            rng.random::<f64>() < p
        }
    }
}

/// Runs a stopping rule over a finite sequence. Returns the 1-based alarm
/// time, or `None` if the sequence ends first.
pub fn run_policy<O: Copy>(
    rule: &dyn StoppingRule<O>,
    observations: &[O],
    rng: &mut dyn RngCore,
) -> Option<u64> {
    let mut state = rule.start();
    observations
        .iter()
        .zip(1u64..)
        .find(|&(&x, t)| state.observe(t, x, rng))
        .map(|(_, t)| t)
}

pub use discrete::{
    beta1_discrete, calibrate_discrete, competitor_family, one_step_competitors, sampled_competitors, per_state_detection_discrete,
    shewhart_discrete, solve_worst_case_prior_discrete, worst_case_prior_by_enumeration,
    DiscreteShewhart, PriorMethod, PriorSolution,
};
pub use gaussian::{calibrate_gaussian, GaussianQuantities, GaussianShewhart};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng_stream;

    /// Threshold decision with ties resolved by `q`.
    fn threshold_stop_probability(l: f64, threshold: f64, q: f64) -> f64 {
        if l > threshold * (1.0 + TIE_TOLERANCE) {
            1.0
        } else if l >= threshold * (1.0 - TIE_TOLERANCE) {
            q
        } else {
            0.0
        }
    }

    fn region_policy(radius: f64, q: f64) -> ShewhartPolicy<f64> {
        let cal = CalibrationResult {
            gamma: 1000.0,
            threshold: radius,
            randomization: q,
            residual: 0.0,
            observation_form: Some(SymmetricRegion { center: 0.0, radius }),
        };
        let lr: ObsFn<f64> = Arc::new(|x: f64| x.abs());
        ShewhartPolicy::new(
            Variant::S2,
            &cal,
            lr.clone(),
            Arc::new(|_| 0.0),
            Arc::new(move |x: f64| threshold_stop_probability(x.abs(), radius, q)),
        )
    }

    #[test]
    fn stops_at_first_exceedance() {
        let p = region_policy(3.29053, 0.0);
        let mut rng = rng_stream(1, 0);
        assert_eq!(run_policy(&p, &[0.1, -0.5, 3.4], &mut rng), Some(3));
        assert_eq!(run_policy(&p, &[0.1, -3.5, 3.4], &mut rng), Some(2));
        assert_eq!(run_policy(&p, &[0.1, -0.5, 1.0, 2.0], &mut rng), None);
    }

    #[test]
    fn atom_randomization_endpoints() {
        let mut rng = rng_stream(2, 0);
        let always = region_policy(2.0, 1.0);
        let never = region_policy(2.0, 0.0);
        assert_eq!(run_policy(&always, &[0.5, 2.0, 5.0], &mut rng), Some(2));
        assert_eq!(run_policy(&never, &[0.5, 2.0, 5.0], &mut rng), Some(3));
    }

    #[test]
    fn atom_randomization_frequency() {
        let p = region_policy(2.0, 0.3);
        let mut rng = rng_stream(3, 0);
        let hits = (0..100_000).filter(|_| p.fires(2.0, &mut rng)).count();
        assert!((hits as f64 / 1e5 - 0.3).abs() < 0.005);
    }

    #[test]
    fn gamma_must_exceed_one() {
        assert!(check_gamma(1.0).is_err());
        assert!(check_gamma(f64::NAN).is_err());
        assert!(check_gamma(1.0 + 1e-9).is_ok());
    }
}
