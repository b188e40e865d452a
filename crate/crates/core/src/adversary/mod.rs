//! The change-imposing adversary and Monte-Carlo estimates of detection.
//!
//! An adversary picks the change time `τ` as a stopping time on its own data
//! stream: nothing, the observations, the hidden states, or both. Rules are
//! handed a view type that only exposes the permitted coordinates, so a rule
//! declared state-only cannot read observations:
//!
//! ```compile_fail
//! use std::sync::Arc;
//! use hmmcd_core::adversary::{AdversaryPolicy, StateView};
//!
//! let peek: AdversaryPolicy<f64, f64> = AdversaryPolicy::States {
//!     rule: Arc::new(|v: &StateView<f64>| v.observations().len() > 3),
//!     horizon: 10,
//! };
//! ```

pub mod game;

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ChangeModel;
use crate::montecarlo::{run_partitioned, MeanTally, MonteCarloEstimate, WeightedTally};
pub use crate::montecarlo::{RunConfig, MIN_TRIALS};
use crate::shewhart::{MemorylessRule, StoppingRule};

/// Fewer surviving trials than this invalidate a conditional estimate.
pub const MIN_SURVIVORS: u64 = 100;
/// Largest tolerated fraction of runs cut off by the horizon cap.
pub const MAX_TRUNCATED_FRACTION: f64 = 1e-3;
/// Default hitting horizon for state-band triggers.
pub const DEFAULT_HIT_HORIZON: u64 = 100_000;
/// Default half-width of the state band around the worst state.
pub const DEFAULT_BAND: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("need at least {minimum} trials, got {trials}")]
    TooFewTrials { trials: u64, minimum: u64 },
    #[error("only {survivors:.1} effective trials survived the conditioning event (need {minimum})")]
    DegenerateConditioning { survivors: f64, minimum: u64 },
    #[error("{truncated} of {trials} runs hit the horizon cap {cap}")]
    CapTooSmall { truncated: u64, trials: u64, cap: u64 },
}

/// What the adversary observes: criteria i to iv.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoModel {
    Independent,
    ObservationsOnly,
    StateOnly,
    Both,
}

/// `ξ_1..ξ_t`
pub struct ObservationView<'a, O> {
    observations: &'a [O],
}

impl<O: Copy> ObservationView<'_, O> {
    pub fn time(&self) -> u64 {
        self.observations.len() as u64
    }

    pub fn observations(&self) -> &[O] {
        self.observations
    }

    pub fn last(&self) -> Option<O> {
        self.observations.last().copied()
    }
}

/// `z_0..z_t`
pub struct StateView<'a, S> {
    states: &'a [S],
}

impl<S: Copy> StateView<'_, S> {
    pub fn time(&self) -> u64 {
        self.states.len() as u64 - 1
    }

    pub fn states(&self) -> &[S] {
        self.states
    }

    pub fn current(&self) -> S {
        *self.states.last().expect("z_0 is always present")
    }
}

/// `(ξ_1..ξ_t, z_0..z_t)`
pub struct JointView<'a, S, O> {
    observations: &'a [O],
    states: &'a [S],
}

impl<S: Copy, O: Copy> JointView<'_, S, O> {
    pub fn time(&self) -> u64 {
        self.observations.len() as u64
    }

    pub fn observations(&self) -> &[O] {
        self.observations
    }

    pub fn states(&self) -> &[S] {
        self.states
    }
}

pub type ObservationRule<O> = Arc<dyn Fn(&ObservationView<O>) -> bool + Send + Sync>;
pub type StateRule<S> = Arc<dyn Fn(&StateView<S>) -> bool + Send + Sync>;
pub type JointRule<S, O> = Arc<dyn Fn(&JointView<S, O>) -> bool + Send + Sync>;

/// A change-time rule. Sequential rules are consulted at `t = 0, 1, ...` and
/// impose the change at the first `t` they return `true`; the change is never
/// imposed if `horizon` passes first.
#[derive(Clone)]
pub enum AdversaryPolicy<S, O> {
    /// `τ` fixed in advance.
    FixedTime(u64),
    /// `τ ~ Geometric(p)` on `{0, 1, ...}`, independent of the data.
    Geometric(f64),
    Observations { rule: ObservationRule<O>, horizon: u64 },
    States { rule: StateRule<S>, horizon: u64 },
    Joint { rule: JointRule<S, O>, horizon: u64 },
    /// First `t` with `distance(z_t, target) <= band`.
    FirstHit { target: S, band: f64, horizon: u64 },
    /// Imposes the change at `time` if `distance(z_time, target) <= band` and
    /// never otherwise. Simulated by drawing `z_time` from the stationary law
    /// restricted to the band, so every trial triggers.
    StateAt { time: u64, target: S, band: f64 },
}

impl<S, O> AdversaryPolicy<S, O> {
    pub fn info_model(&self) -> InfoModel {
        match self {
            Self::FixedTime(_) | Self::Geometric(_) => InfoModel::Independent,
            Self::Observations { .. } => InfoModel::ObservationsOnly,
            Self::States { .. } | Self::FirstHit { .. } | Self::StateAt { .. } => InfoModel::StateOnly,
            Self::Joint { .. } => InfoModel::Both,
        }
    }

    fn reads_observations(&self) -> bool {
        matches!(self, Self::Observations { .. } | Self::Joint { .. })
    }
}

impl<S, O> std::fmt::Debug for AdversaryPolicy<S, O>
where
    S: std::fmt::Debug,
{
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::FixedTime(t) => write!(f, "FixedTime({t})"),
            Self::Geometric(p) => write!(f, "Geometric({p})"),
            Self::Observations { horizon, .. } => write!(f, "Observations {{ horizon: {horizon} }}"),
            Self::States { horizon, .. } => write!(f, "States {{ horizon: {horizon} }}"),
            Self::Joint { horizon, .. } => write!(f, "Joint {{ horizon: {horizon} }}"),
            Self::FirstHit { target, band, horizon } => {
                write!(f, "FirstHit {{ target: {target:?}, band: {band}, horizon: {horizon} }}")
            }
            Self::StateAt { time, target, band } => {
                write!(f, "StateAt {{ time: {time}, target: {target:?}, band: {band} }}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Never,
    FalseAlarm,
    Survived { tau: u64, weight: f64, detected: bool },
}

struct Trial<'a, M: ChangeModel> {
    model: &'a M,
    detector: &'a dyn StoppingRule<M::Obs>,
    adversary: &'a AdversaryPolicy<M::State, M::Obs>,
    /// When set, pre-change data are drawn conditioned on no alarm and each
    /// pre-change step multiplies the trial weight by `1 - 1/γ`.
    reweight: Option<&'a dyn MemorylessRule<M::Obs>>,
    states: Vec<M::State>,
    observations: Vec<M::Obs>,
}

impl<'a, M: ChangeModel> Trial<'a, M> {
    fn new(
        model: &'a M,
        detector: &'a dyn StoppingRule<M::Obs>,
        adversary: &'a AdversaryPolicy<M::State, M::Obs>,
        reweight: bool,
    ) -> Self {
        Self {
            model,
            detector,
            adversary,
            reweight: if reweight { detector.memoryless() } else { None },
            states: Vec::new(),
            observations: Vec::new(),
        }
    }

    fn fires<R: RngCore>(p: f64, rng: &mut R) -> bool {
        p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p)
    }

    /// `ξ ~ f∞` conditioned on the memoryless detector staying silent.
    fn surviving_pre_obs<R: RngCore>(&self, m: &dyn MemorylessRule<M::Obs>, rng: &mut R) -> M::Obs {
        loop {
            let x = self.model.sample_pre_obs(rng);
            if !Self::fires(m.stop_probability(x), rng) {
                return x;
            }
        }
    }

    fn run<R: RngCore>(&mut self, rng: &mut R) -> Outcome {
        let mut detector = match self.reweight {
            Some(_) => None,
            None => Some(self.detector.start()),
        };
        let (tau, z_tau) = match self.adversary {
            AdversaryPolicy::FixedTime(_) | AdversaryPolicy::Geometric(_) | AdversaryPolicy::StateAt { .. } => {
                let (tau, z) = match *self.adversary {
                    AdversaryPolicy::FixedTime(t) => (t, self.model.sample_stationary(rng)),
                    AdversaryPolicy::Geometric(p) => {
                        let g = Geometric::new(p).expect("geometric parameter in (0, 1]");
                        (g.sample(rng), self.model.sample_stationary(rng))
                    }
                    AdversaryPolicy::StateAt { time, target, band } => {
                        match self.model.sample_stationary_near(target, band, rng) {
                            Some(z) => (time, z),
                            None => return Outcome::Never,
                        }
                    }
                    _ => unreachable!(),
                };
                if let Some(d) = detector.as_mut() {
                    for t in 1..=tau {
                        let x = self.model.sample_pre_obs(rng);
                        if d.observe(t, x, rng) {
                            return Outcome::FalseAlarm;
                        }
                    }
                }
                (tau, z)
            }
            _ => match self.sequential(detector.as_mut(), rng) {
                Ok(found) => found,
                Err(outcome) => return outcome,
            },
        };
        let weight = match self.reweight {
            Some(m) => (tau as f64 * (1.0 - m.nominal_alarm_rate()).ln()).exp(),
            None => 1.0,
        };
        let z = self.model.sample_post_transition(z_tau, rng);
        let x = self.model.sample_post_obs(z, rng);
        let detected = match (self.reweight, detector.as_mut()) {
            (Some(m), _) => Self::fires(m.stop_probability(x), rng),
            (None, Some(d)) => d.observe(tau + 1, x, rng),
            (None, None) => unreachable!(),
        };
        Outcome::Survived { tau, weight, detected }
    }

    /// Steps the nominal regime until a sequential rule fires.
    fn sequential<R: RngCore>(
        &mut self,
        mut detector: Option<&mut Box<dyn RuleState<M::Obs> + 'a>>,
        rng: &mut R,
    ) -> Result<(u64, M::State), Outcome> {
        let reads_obs = self.adversary.reads_observations();
        self.states.clear();
        self.observations.clear();
        let mut z = self.model.sample_stationary(rng);
        self.states.push(z);
        let horizon = match self.adversary {
            AdversaryPolicy::Observations { horizon, .. }
            | AdversaryPolicy::States { horizon, .. }
            | AdversaryPolicy::Joint { horizon, .. }
            | AdversaryPolicy::FirstHit { horizon, .. } => *horizon,
            _ => unreachable!(),
        };
        let mut t = 0u64;
        loop {
            if self.triggers(z) {
                return Ok((t, z));
            }
            if t >= horizon {
                return Err(Outcome::Never);
            }
            t += 1;
            z = self.model.sample_pre_transition(z, rng);
            match (self.reweight, detector.as_deref_mut()) {
                (Some(m), _) => {
                    if reads_obs {
                        let x = self.surviving_pre_obs(m, rng);
                        self.observations.push(x);
                    }
                }
                (None, Some(d)) => {
                    let x = self.model.sample_pre_obs(rng);
                    if d.observe(t, x, rng) {
                        return Err(Outcome::FalseAlarm);
                    }
                    if reads_obs {
                        self.observations.push(x);
                    }
                }
                (None, None) => unreachable!(),
            }
            if !matches!(self.adversary, AdversaryPolicy::FirstHit { .. }) {
                self.states.push(z);
            }
        }
    }

    fn triggers(&self, z: M::State) -> bool {
        match self.adversary {
            AdversaryPolicy::Observations { rule, .. } => rule(&ObservationView {
                observations: &self.observations,
            }),
            AdversaryPolicy::States { rule, .. } => rule(&StateView { states: &self.states }),
            AdversaryPolicy::Joint { rule, .. } => rule(&JointView {
                observations: &self.observations,
                states: &self.states,
            }),
            AdversaryPolicy::FirstHit { target, band, .. } => {
                self.model.state_distance(z, *target) <= *band
            }
            _ => unreachable!(),
        }
    }
}

use crate::shewhart::RuleState;

/// Conditional one-step detection frequency with its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub estimate: MonteCarloEstimate,
    /// Trials in which the adversary never imposed the change.
    pub never_triggered: u64,
    /// Trials in which the detector alarmed before the change.
    pub false_alarms: u64,
    /// Kish effective sample size of the weighted estimate.
    pub effective_size: f64,
    /// Mean change time among surviving trials.
    pub mean_tau: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct DetectionTally {
    weighted: WeightedTally,
    tau: MeanTally,
    never: u64,
    false_alarms: u64,
}

impl DetectionTally {
    fn merge(mut self, o: Self) -> Self {
        self.weighted = self.weighted.merge(o.weighted);
        self.tau = self.tau.merge(o.tau);
        self.never += o.never;
        self.false_alarms += o.false_alarms;
        self
    }
}

fn detection_run<M: ChangeModel>(
    model: &M,
    detector: &dyn StoppingRule<M::Obs>,
    adversary: &AdversaryPolicy<M::State, M::Obs>,
    config: &RunConfig,
    stream_offset: u64,
    reweight: bool,
) -> Result<DetectionReport, SimulationError> {
    config.check().map_err(|(trials, minimum)| SimulationError::TooFewTrials { trials, minimum })?;
    let tally = run_partitioned(config.seed, stream_offset, config.trials, config.workers, |p, rng| {
        let mut trial = Trial::new(model, detector, adversary, reweight);
        let mut t = DetectionTally::default();
        for _ in 0..p.trials {
            match trial.run(rng) {
                Outcome::Never => t.never += 1,
                Outcome::FalseAlarm => t.false_alarms += 1,
                Outcome::Survived { tau, weight, detected } => {
                    t.weighted.add(weight, f64::from(u8::from(detected)));
                    t.tau.add(tau as f64);
                }
            }
        }
        t
    })
    .into_iter()
    .fold(DetectionTally::default(), DetectionTally::merge);
    let ess = tally.weighted.effective_size();
    if ess < MIN_SURVIVORS as f64 {
        return Err(SimulationError::DegenerateConditioning {
            survivors: ess,
            minimum: MIN_SURVIVORS,
        });
    }
    Ok(DetectionReport {
        estimate: MonteCarloEstimate {
            value: tally.weighted.ratio(),
            std_error: tally.weighted.std_error(),
            trials: config.trials,
            seed: config.seed,
            conditioning_count: ess.round() as u64,
        },
        never_triggered: tally.never,
        false_alarms: tally.false_alarms,
        effective_size: ess,
        mean_tau: tally.tau.mean(),
    })
}

/// Estimates `P(T = τ+1 | T > τ)` with `τ` chosen by `adversary`.
///
/// For memoryless detectors the pre-change segment is drawn conditioned on
/// survival and trials are weighted by `(1 - 1/γ)^τ`, which gives the same
/// conditional law without discarding false alarms. Other detectors are
/// simulated directly and false alarms are dropped.
pub fn estimate_worst_detection<M: ChangeModel>(
    model: &M,
    detector: &dyn StoppingRule<M::Obs>,
    adversary: &AdversaryPolicy<M::State, M::Obs>,
    config: &RunConfig,
) -> Result<DetectionReport, SimulationError> {
    detection_run(model, detector, adversary, config, 0, true)
}

/// Mean run length under the nominal regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArlReport {
    pub estimate: MonteCarloEstimate,
    pub truncated: u64,
    pub horizon_cap: u64,
    /// Fraction of runs alarming at `t = 1`.
    pub first_step_rate: f64,
}

pub fn estimate_arl<M: ChangeModel>(
    model: &M,
    detector: &dyn StoppingRule<M::Obs>,
    horizon_cap: u64,
    config: &RunConfig,
) -> Result<ArlReport, SimulationError> {
    config.check().map_err(|(trials, minimum)| SimulationError::TooFewTrials { trials, minimum })?;
    let (tally, truncated, first) = run_partitioned(config.seed, 0, config.trials, config.workers, |p, rng| {
        let mut tally = MeanTally::default();
        let (mut truncated, mut first) = (0u64, 0u64);
        for _ in 0..p.trials {
            let mut state = detector.start();
            let stop = (1..=horizon_cap).find(|&t| {
                let x = model.sample_pre_obs(rng);
                state.observe(t, x, rng)
            });
            match stop {
                Some(t) => {
                    first += u64::from(t == 1);
                    tally.add(t as f64);
                }
                None => {
                    truncated += 1;
                    tally.add(horizon_cap as f64);
                }
            }
        }
        (tally, truncated, first)
    })
    .into_iter()
    .fold((MeanTally::default(), 0, 0), |(a, b, c), (x, y, z)| (a.merge(x), b + y, c + z));
    if truncated as f64 > MAX_TRUNCATED_FRACTION * config.trials as f64 {
        return Err(SimulationError::CapTooSmall {
            truncated,
            trials: config.trials,
            cap: horizon_cap,
        });
    }
    Ok(ArlReport {
        estimate: MonteCarloEstimate {
            value: tally.mean(),
            std_error: tally.std_error(),
            trials: config.trials,
            seed: config.seed,
            conditioning_count: config.trials,
        },
        truncated,
        horizon_cap,
        first_step_rate: first as f64 / config.trials as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualizerReport {
    pub estimates: Vec<(u64, MonteCarloEstimate)>,
    /// Largest pairwise `|a - b| / sqrt(se_a² + se_b²)`.
    pub max_pair_z: f64,
    pub worst_pair: (u64, u64),
    /// Largest `|estimate - reference| / se`, when a reference is given.
    pub max_reference_z: Option<f64>,
    pub k: f64,
}

impl EqualizerReport {
    pub fn mutually_consistent(&self) -> bool {
        self.max_pair_z <= self.k
    }

    pub fn consistent_with_reference(&self) -> bool {
        self.max_reference_z.is_none_or(|z| z <= self.k)
    }

    pub fn passed(&self) -> bool {
        self.mutually_consistent() && self.consistent_with_reference()
    }
}

/// Estimates `P_t(T = t+1 | T > t)` at each fixed `t` by direct simulation
/// and compares them pairwise at `k` combined standard errors.
pub fn equalizer_check<M: ChangeModel>(
    model: &M,
    detector: &dyn StoppingRule<M::Obs>,
    times: &[u64],
    reference: Option<f64>,
    k: f64,
    config: &RunConfig,
) -> Result<EqualizerReport, SimulationError> {
    let mut estimates = Vec::with_capacity(times.len());
    for &t in times {
        let adversary = AdversaryPolicy::FixedTime(t);
        let r = detection_run(model, detector, &adversary, config, (t + 1) << 32, false)?;
        estimates.push((t, r.estimate));
    }
    let mut max_pair_z = 0.0;
    let mut worst_pair = (times.first().copied().unwrap_or(0), times.first().copied().unwrap_or(0));
    for (i, (ta, a)) in estimates.iter().enumerate() {
        for (tb, b) in &estimates[i + 1..] {
            let z = (a.value - b.value).abs() / a.std_error.hypot(b.std_error);
            if z > max_pair_z {
                max_pair_z = z;
                worst_pair = (*ta, *tb);
            }
        }
    }
    let max_reference_z = reference.map(|r| {
        estimates
            .iter()
            .map(|(_, e)| e.z_score(r).abs())
            .fold(0.0, f64::max)
    });
    Ok(EqualizerReport {
        estimates,
        max_pair_z,
        worst_pair,
        max_reference_z,
        k,
    })
}

/// Distribution of the adversary's change time alone, with a detector that
/// never alarms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    pub trials: u64,
    pub triggered: u64,
    pub mean_tau: f64,
}

pub fn adversary_tau<M: ChangeModel>(
    model: &M,
    adversary: &AdversaryPolicy<M::State, M::Obs>,
    config: &RunConfig,
) -> TauReport {
    let silent = crate::shewhart::rules::FixedTime { time: u64::MAX };
    let tally = run_partitioned(config.seed, 0, config.trials, config.workers, |p, rng| {
        let mut trial = Trial::new(model, &silent, adversary, false);
        let mut t = DetectionTally::default();
        for _ in 0..p.trials {
            match trial.run(rng) {
                Outcome::Survived { tau, .. } => t.tau.add(tau as f64),
                _ => t.never += 1,
            }
        }
        t
    })
    .into_iter()
    .fold(DetectionTally::default(), DetectionTally::merge);
    TauReport {
        trials: config.trials,
        triggered: tally.tau.n,
        mean_tau: tally.tau.mean(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_discrete, make_gaussian_ar1, DiscreteModel, GaussianAr1Params};
    use crate::shewhart::rules::ParityShewhart;
    use crate::shewhart::{DiscreteShewhart, GaussianShewhart, PriorMethod, Variant};

    fn figure_model() -> crate::model::GaussianAr1 {
        make_gaussian_ar1(GaussianAr1Params {
            alpha: 0.5,
            mu: 1.0,
            sigma2: 0.5,
        })
        .unwrap()
    }

    fn cfg(trials: u64, seed: u64) -> RunConfig {
        RunConfig {
            trials,
            seed,
            workers: 4,
        }
    }

    #[test]
    fn fixed_zero_changes_immediately() {
        let m = figure_model();
        let g = GaussianShewhart::new(&m, 100.0).unwrap();
        let p = g.policy(Variant::S2);
        let r = estimate_worst_detection(&m, &p, &AdversaryPolicy::FixedTime(0), &cfg(20_000, 1)).unwrap();
        assert_eq!(r.mean_tau, 0.0);
        assert_eq!(r.never_triggered + r.false_alarms, 0);
        assert!(r.estimate.agrees_with(g.beta2_tilde(), 3.0, 0.0), "{r:?}");
    }

    #[test]
    fn state_band_is_hit() {
        let m = figure_model();
        let adversary = AdversaryPolicy::FirstHit {
            target: -1.0,
            band: 0.05,
            horizon: DEFAULT_HIT_HORIZON,
        };
        let r = adversary_tau(&m, &adversary, &cfg(10_000, 3));
        assert!(r.triggered as f64 >= 0.999 * r.trials as f64, "{r:?}");
    }

    #[test]
    fn too_few_trials_rejected() {
        let m = figure_model();
        let p = GaussianShewhart::new(&m, 100.0).unwrap().policy(Variant::S2);
        let e = estimate_arl(&m, &p, 2000, &cfg(100, 1)).unwrap_err();
        assert!(matches!(e, SimulationError::TooFewTrials { .. }));
    }

    #[test]
    fn arl_at_gamma_two_is_geometric() {
        let m = figure_model();
        let p = GaussianShewhart::new(&m, 2.0).unwrap().policy(Variant::S2);
        let r = estimate_arl(&m, &p, 200, &cfg(100_000, 5)).unwrap();
        assert!(r.estimate.agrees_with(2.0, 3.0, 0.0), "{r:?}");
        assert!((r.first_step_rate - 0.5).abs() < 0.005);
    }

    #[test]
    fn arl_cap_too_small_is_an_error() {
        let m = figure_model();
        let p = GaussianShewhart::new(&m, 100.0).unwrap().policy(Variant::S2);
        let e = estimate_arl(&m, &p, 50, &cfg(10_000, 5)).unwrap_err();
        assert!(matches!(e, SimulationError::CapTooSmall { .. }));
    }

    #[test]
    fn atomic_discrete_arl_matches_gamma() {
        let hmm = make_discrete(DiscreteModel {
            pre_obs: vec![0.5, 0.3, 0.2],
            post_obs: vec![vec![0.1, 0.2, 0.7], vec![0.6, 0.3, 0.1]],
            pre_trans: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            post_trans: vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            stationary: vec![0.5, 0.5],
        })
        .unwrap();
        let s = DiscreteShewhart::new(&hmm, 8.0, PriorMethod::FixedPoint).unwrap();
        for v in [Variant::S1, Variant::S2] {
            let p = s.policy(v);
            assert!(s.stop(v).iter().any(|&q| q > 0.0 && q < 1.0));
            let r = estimate_arl(&hmm, &p, 400, &cfg(100_000, 7)).unwrap();
            assert!(r.estimate.agrees_with(8.0, 3.0, 0.0), "{v}: {r:?}");
        }
    }

    #[test]
    fn reproducible_for_fixed_seed_and_workers() {
        let m = figure_model();
        let p = GaussianShewhart::new(&m, 10.0).unwrap().policy(Variant::S1);
        let a = estimate_worst_detection(&m, &p, &AdversaryPolicy::Geometric(0.2), &cfg(10_000, 9)).unwrap();
        let b = estimate_worst_detection(&m, &p, &AdversaryPolicy::Geometric(0.2), &cfg(10_000, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weighting_matches_direct_conditioning() {
        let m = figure_model();
        let g = GaussianShewhart::new(&m, 10.0).unwrap();
        let p = g.policy(Variant::S2);
        let adversary = AdversaryPolicy::Observations {
            rule: Arc::new(|v: &ObservationView<f64>| v.last().is_some_and(|x| x > 0.5)),
            horizon: 200,
        };
        let config = cfg(200_000, 11);
        let w = detection_run(&m, &p, &adversary, &config, 0, true).unwrap();
        let d = detection_run(&m, &p, &adversary, &config, 1 << 40, false).unwrap();
        let z = (w.estimate.value - d.estimate.value).abs()
            / w.estimate.std_error.hypot(d.estimate.std_error);
        assert!(z < 3.0, "{w:?} {d:?}");
    }

    #[test]
    fn parity_rule_is_not_an_equalizer() {
        let m = figure_model();
        let g = GaussianShewhart::new(&m, 100.0).unwrap();
        let control = ParityShewhart {
            region: g.region(Variant::S1),
            shrink: 0.5,
        };
        let r = equalizer_check(&m, &control, &[0, 1, 2], None, 3.0, &cfg(100_000, 13)).unwrap();
        assert!(!r.passed(), "{r:?}");
    }
}
