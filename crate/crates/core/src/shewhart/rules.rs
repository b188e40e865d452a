//! Stopping rules on an observation stream.
//!
//! A rule hands out a fresh per-run state; the state sees one observation at
//! a time and says whether to alarm. Randomized decisions draw from the
//! generator passed in, so a run is reproducible from the stream alone.

use std::sync::Arc;

use rand::{Rng, RngCore};

use super::{ShewhartPolicy, SymmetricRegion};

pub trait StoppingRule<O>: Send + Sync {
    fn start(&self) -> Box<dyn RuleState<O> + '_>;

    /// Rules whose decision depends only on the current observation through a
    /// time-invariant stop probability.
    fn memoryless(&self) -> Option<&dyn MemorylessRule<O>> {
        None
    }
}

pub trait RuleState<O> {
    /// Feeds `ξ_t`; returns `true` to alarm at `t`.
    fn observe(&mut self, t: u64, x: O, rng: &mut dyn RngCore) -> bool;
}

pub trait MemorylessRule<O> {
    fn stop_probability(&self, x: O) -> f64;
    /// `P∞` of alarming on a single observation.
    fn nominal_alarm_rate(&self) -> f64;
}

struct Memoryless<'a, O>(&'a ShewhartPolicy<O>);

impl<O: Copy> RuleState<O> for Memoryless<'_, O> {
    fn observe(&mut self, _t: u64, x: O, rng: &mut dyn RngCore) -> bool {
        self.0.fires(x, rng)
    }
}

impl<O: Copy + Send + Sync> StoppingRule<O> for ShewhartPolicy<O> {
    fn start(&self) -> Box<dyn RuleState<O> + '_> {
        Box::new(Memoryless(self))
    }

    fn memoryless(&self) -> Option<&dyn MemorylessRule<O>> {
        Some(self)
    }
}

impl<O: Copy> MemorylessRule<O> for ShewhartPolicy<O> {
    fn stop_probability(&self, x: O) -> f64 {
        ShewhartPolicy::stop_probability(self, x)
    }

    fn nominal_alarm_rate(&self) -> f64 {
        1.0 / self.gamma
    }
}

/// Alarms the first time `ξ_t >= cutoff`.
#[derive(Debug, Clone, Copy)]
pub struct OneSided {
    pub cutoff: f64,
}

/// Alarms the first time `ξ_t` falls in the region.
#[derive(Debug, Clone, Copy)]
pub struct RegionRule {
    pub region: SymmetricRegion,
}

/// Alarms at a fixed time regardless of the data.
#[derive(Debug, Clone, Copy)]
pub struct FixedTime {
    pub time: u64,
}

/// Picks `first` with probability `weight` and `second` otherwise, before
/// any observation is taken.
#[derive(Clone)]
pub struct TimeZeroMixture<O> {
    pub first: Arc<dyn StoppingRule<O>>,
    pub second: Arc<dyn StoppingRule<O>>,
    pub weight: f64,
}

/// CUSUM on a log-likelihood-ratio increment, forced to alarm at `horizon`.
#[derive(Clone)]
pub struct TruncatedCusum {
    pub log_lr: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub threshold: f64,
    pub horizon: u64,
}

/// A region test whose radius shrinks by `shrink` at even times.
#[derive(Debug, Clone, Copy)]
pub struct ParityShewhart {
    pub region: SymmetricRegion,
    pub shrink: f64,
}

/// Alarms on symbol `x` with probability `stop[x]`.
#[derive(Debug, Clone)]
pub struct StopTable {
    pub stop: Vec<f64>,
    /// `Σ f∞(x) stop[x]`
    pub rate: f64,
}

impl StopTable {
    pub fn new(stop: Vec<f64>, pre_obs: &[f64]) -> Self {
        let rate = stop.iter().zip(pre_obs).map(|(s, p)| s * p).sum();
        Self { stop, rate }
    }
}

struct Stateless<F>(F);

impl<O, F: FnMut(u64, O) -> bool> RuleState<O> for Stateless<F> {
    fn observe(&mut self, t: u64, x: O, _rng: &mut dyn RngCore) -> bool {
        (self.0)(t, x)
    }
}

impl StoppingRule<f64> for OneSided {
    fn start(&self) -> Box<dyn RuleState<f64> + '_> {
        let c = self.cutoff;
        Box::new(Stateless(move |_, x: f64| x >= c))
    }
}

impl StoppingRule<f64> for RegionRule {
    fn start(&self) -> Box<dyn RuleState<f64> + '_> {
        let r = self.region;
        Box::new(Stateless(move |_, x: f64| r.contains(x)))
    }
}

impl<O> StoppingRule<O> for FixedTime {
    fn start(&self) -> Box<dyn RuleState<O> + '_> {
        let n = self.time;
        Box::new(Stateless(move |t, _| t >= n))
    }
}

impl StoppingRule<f64> for ParityShewhart {
    fn start(&self) -> Box<dyn RuleState<f64> + '_> {
        let SymmetricRegion { center, radius } = self.region;
        let shrink = self.shrink;
        Box::new(Stateless(move |t, x: f64| {
            let r = if t % 2 == 0 { radius - shrink } else { radius };
            (x - center).abs() >= r
        }))
    }
}

struct TableState<'a>(&'a StopTable);

impl RuleState<usize> for TableState<'_> {
    fn observe(&mut self, _t: u64, x: usize, rng: &mut dyn RngCore) -> bool {
        let p = self.0.stop[x];
        p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p)
    }
}

impl StoppingRule<usize> for StopTable {
    fn start(&self) -> Box<dyn RuleState<usize> + '_> {
        Box::new(TableState(self))
    }

    fn memoryless(&self) -> Option<&dyn MemorylessRule<usize>> {
        Some(self)
    }
}

impl MemorylessRule<usize> for StopTable {
    fn stop_probability(&self, x: usize) -> f64 {
        self.stop[x]
    }

    fn nominal_alarm_rate(&self) -> f64 {
        self.rate
    }
}

struct CusumState<'a> {
    rule: &'a TruncatedCusum,
    statistic: f64,
}

impl RuleState<f64> for CusumState<'_> {
    fn observe(&mut self, t: u64, x: f64, _rng: &mut dyn RngCore) -> bool {
        self.statistic = (self.statistic + (self.rule.log_lr)(x)).max(0.0);
        self.statistic >= self.rule.threshold || t >= self.rule.horizon
    }
}

impl StoppingRule<f64> for TruncatedCusum {
    fn start(&self) -> Box<dyn RuleState<f64> + '_> {
        Box::new(CusumState {
            rule: self,
            statistic: 0.0,
        })
    }
}

enum MixtureState<'a, O> {
    Undecided(&'a TimeZeroMixture<O>),
    Chosen(Box<dyn RuleState<O> + 'a>),
}

impl<O> RuleState<O> for MixtureState<'_, O> {
    fn observe(&mut self, t: u64, x: O, rng: &mut dyn RngCore) -> bool {
        if let MixtureState::Undecided(m) = *self {
            let pick = if rng.random::<f64>() < m.weight {
                &m.first
            } else {
                &m.second
            };
            *self = MixtureState::Chosen(pick.start());
        }
        match self {
            MixtureState::Chosen(s) => s.observe(t, x, rng),
            MixtureState::Undecided(_) => unreachable!(),
        }
    }
}

impl<O: 'static> StoppingRule<O> for TimeZeroMixture<O> {
    fn start(&self) -> Box<dyn RuleState<O> + '_> {
        Box::new(MixtureState::Undecided(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng_stream;
    use crate::shewhart::run_policy;

    #[test]
    fn simple_rules() {
        let mut rng = rng_stream(0, 0);
        let xs = [0.0, 1.0, 2.5, -3.0, 0.0, 0.0];
        assert_eq!(run_policy(&OneSided { cutoff: 2.0 }, &xs, &mut rng), Some(3));
        let region = SymmetricRegion { center: 0.0, radius: 2.9 };
        assert_eq!(run_policy(&RegionRule { region }, &xs, &mut rng), Some(4));
        assert_eq!(run_policy(&FixedTime { time: 5 }, &xs, &mut rng), Some(5));
        let parity = ParityShewhart { region, shrink: 0.5 };
        assert_eq!(run_policy(&parity, &xs, &mut rng), Some(4));
        let parity = ParityShewhart { region, shrink: 1.9 };
        assert_eq!(run_policy(&parity, &xs, &mut rng), Some(2));
    }

    #[test]
    fn cusum_accumulates_and_truncates() {
        let c = TruncatedCusum {
            log_lr: Arc::new(|x| x),
            threshold: 2.0,
            horizon: 10,
        };
        let mut rng = rng_stream(0, 0);
        assert_eq!(run_policy(&c, &[1.0, -5.0, 1.0, 1.5], &mut rng), Some(4));
        assert_eq!(run_policy(&c, &[-1.0; 12], &mut rng), Some(10));
    }

    #[test]
    fn mixture_frequency() {
        let m: TimeZeroMixture<f64> = TimeZeroMixture {
            first: Arc::new(FixedTime { time: 2 }),
            second: Arc::new(FixedTime { time: 3 }),
            weight: 0.25,
        };
        let mut rng = rng_stream(5, 0);
        let xs = [0.0; 4];
        let n = 40_000;
        let mean = (0..n)
            .map(|_| run_policy(&m, &xs, &mut rng).unwrap() as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 2.75).abs() < 0.01, "{mean}");
    }
}
