//! Checks of the detection bounds.
//!
//! For a stopping time `T` under the nominal regime, the ratio
//! `E∞[L_j(ξ_T)] / E∞[T]` bounds its worst-case detection probability. The
//! Shewhart test `S_j` attains `β_j`, and any `T` with `E∞[T] >= γ` stays at
//! or below it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::rules::{FixedTime, OneSided, RegionRule, StopTable, TimeZeroMixture, TruncatedCusum};
use super::{competitor_family, DiscreteShewhart, GaussianShewhart, ShewhartError, StoppingRule, SymmetricRegion, Variant};
use crate::adversary::{estimate_arl, SimulationError};
use crate::model::{ChangeModel, GaussianAr1};
use crate::montecarlo::{run_partitioned, MeanTally, MonteCarloEstimate, RatioTally, RunConfig};
use crate::numerics::{norm_cdf, norm_quantile, solve_monotone_root, RootBracket, ROOT_TOLERANCE};

/// Tolerance of the exact discrete comparisons.
pub const EXACT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    /// `E∞[L(ξ_T)] / E∞[T]`
    pub ratio: MonteCarloEstimate,
    pub run_length: MonteCarloEstimate,
    /// Runs cut at the horizon cap. They contribute `T = cap` and no `L` term.
    pub truncated: u64,
    pub horizon_cap: u64,
}

pub type ObsWeight<'a, O> = &'a (dyn Fn(O) -> f64 + Sync);

/// Estimates the bound ratio for each likelihood ratio in `lrs` from one set
/// of nominal runs of `rule`.
pub fn bound_ratios<M: ChangeModel>(
    model: &M,
    rule: &dyn StoppingRule<M::Obs>,
    lrs: &[ObsWeight<'_, M::Obs>],
    horizon_cap: u64,
    config: &RunConfig,
    stream_offset: u64,
) -> Result<Vec<RatioEstimate>, SimulationError> {
    config
        .check()
        .map_err(|(trials, minimum)| SimulationError::TooFewTrials { trials, minimum })?;
    let empty = || (vec![RatioTally::default(); lrs.len()], MeanTally::default(), 0u64);
    let (tallies, length, truncated) = run_partitioned(config.seed, stream_offset, config.trials, config.workers, |p, rng| {
        let (mut tallies, mut length, mut truncated) = empty();
        for _ in 0..p.trials {
            let mut state = rule.start();
            let mut stop = None;
            for t in 1..=horizon_cap {
                let x = model.sample_pre_obs(rng);
                if state.observe(t, x, rng) {
                    stop = Some((t, x));
                    break;
                }
            }
            let (t, weights) = match stop {
                Some((t, x)) => (t, Some(x)),
                None => {
                    truncated += 1;
                    (horizon_cap, None)
                }
            };
            length.add(t as f64);
            for (tally, lr) in tallies.iter_mut().zip(lrs) {
                tally.add(weights.map_or(0.0, |x| lr(x)), t as f64);
            }
        }
        (tallies, length, truncated)
    })
    .into_iter()
    .fold(empty(), |(mut ta, la, na), (tb, lb, nb)| {
        for (a, b) in ta.iter_mut().zip(tb) {
            *a = a.merge(b);
        }
        (ta, la.merge(lb), na + nb)
    });
    let run_length = MonteCarloEstimate {
        value: length.mean(),
        std_error: length.std_error(),
        trials: config.trials,
        seed: config.seed,
        conditioning_count: config.trials,
    };
    Ok(tallies
        .iter()
        .map(|t| RatioEstimate {
            ratio: MonteCarloEstimate {
                value: t.ratio(),
                std_error: t.std_error(),
                trials: config.trials,
                seed: config.seed,
                conditioning_count: config.trials,
            },
            run_length,
            truncated,
            horizon_cap,
        })
        .collect())
}

/// `E∞[L(ξ_T)] / E∞[T]` for one likelihood ratio.
pub fn theorem1_ratio<M: ChangeModel>(
    model: &M,
    rule: &dyn StoppingRule<M::Obs>,
    lr: ObsWeight<'_, M::Obs>,
    horizon_cap: u64,
    config: &RunConfig,
) -> Result<RatioEstimate, SimulationError> {
    Ok(bound_ratios(model, rule, &[lr], horizon_cap, config, 0)?.remove(0))
}

#[derive(Clone)]
pub struct FamilyMember<O> {
    pub name: String,
    pub rule: Arc<dyn StoppingRule<O>>,
}

impl<O> std::fmt::Debug for FamilyMember<O> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FamilyMember({})", self.name)
    }
}

/// One bound against which the family is checked.
pub struct BoundReference<'a, O> {
    pub variant: Variant,
    pub beta: f64,
    pub lr: ObsWeight<'a, O>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEntry {
    pub name: String,
    pub variant: Variant,
    pub beta: f64,
    pub ratio: MonteCarloEstimate,
    pub run_length: MonteCarloEstimate,
    /// Set when the member misses the false-alarm constraint.
    pub excluded: Option<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub gamma: f64,
    pub k: f64,
    pub entries: Vec<FamilyEntry>,
}

impl Theorem2Report {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.excluded.is_some() || e.passed)
    }

    pub fn checked(&self) -> usize {
        self.entries.iter().filter(|e| e.excluded.is_none()).count()
    }
}

/// Checks `ratio <= β_j + k·SE` for every member meeting `E∞[T] >= γ`
/// (within `k` standard errors). The bound holds for any such `T` since
/// the best ratio at false-alarm period `γ' >= γ` is `β_j(γ') <= β_j(γ)`.
pub fn theorem2_family_check<M: ChangeModel>(
    model: &M,
    gamma: f64,
    family: &[FamilyMember<M::Obs>],
    references: &[BoundReference<'_, M::Obs>],
    horizon_cap: u64,
    k: f64,
    config: &RunConfig,
) -> Result<Theorem2Report, SimulationError> {
    let lrs: Vec<ObsWeight<'_, M::Obs>> = references.iter().map(|r| r.lr).collect();
    let mut entries = Vec::new();
    for (i, member) in family.iter().enumerate() {
        let estimates = bound_ratios(model, member.rule.as_ref(), &lrs, horizon_cap, config, (i as u64 + 1) << 32)?;
        for (r, e) in references.iter().zip(estimates) {
            let run = e.run_length;
            let excluded = if run.value + k * run.std_error < gamma {
                Some(format!("E∞[T] = {:.4} ± {:.4} is below γ = {gamma}", run.value, run.std_error))
            } else if e.truncated > 0 {
                Some(format!("{} runs truncated at {horizon_cap}", e.truncated))
            } else {
                None
            };
            entries.push(FamilyEntry {
                name: member.name.clone(),
                variant: r.variant,
                beta: r.beta,
                ratio: e.ratio,
                run_length: run,
                excluded,
                passed: e.ratio.value <= r.beta + k * e.ratio.std_error,
            });
        }
    }
    Ok(Theorem2Report { gamma, k, entries })
}

/// `c` with `P∞(|ξ - shift| >= c) = 1/γ` for standard normal `ξ`.
pub fn shifted_cutoff(shift: f64, gamma: f64) -> Result<f64, ShewhartError> {
    let f = |c: f64| norm_cdf(shift - c) + norm_cdf(-shift - c) - 1.0 / gamma;
    let hi = shift.abs() + 40.0;
    let bracket = RootBracket::new(f, 0.0, hi)?;
    Ok(solve_monotone_root(f, bracket, ROOT_TOLERANCE / gamma)?)
}

/// `γ` as a time-zero mixture of `⌊γ⌋` and `⌈γ⌉`.
pub fn fixed_time_mixture<O: 'static>(gamma: f64) -> Arc<dyn StoppingRule<O>> {
    let (lo, hi) = (gamma.floor(), gamma.ceil());
    if lo == hi {
        return Arc::new(FixedTime { time: lo as u64 });
    }
    Arc::new(TimeZeroMixture {
        first: Arc::new(FixedTime { time: lo as u64 }),
        second: Arc::new(FixedTime { time: hi as u64 }),
        weight: hi - gamma,
    })
}

/// Threshold for a CUSUM on `log_lr` truncated at `horizon` whose estimated
/// nominal run length reaches `target`. Runs share random numbers across
/// thresholds, so the estimate is monotone in the threshold.
pub fn calibrate_cusum(
    model: &GaussianAr1,
    log_lr: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    target: f64,
    horizon: u64,
    config: &RunConfig,
) -> Result<f64, SimulationError> {
    let arl = |h: f64| -> Result<f64, SimulationError> {
        let rule = TruncatedCusum {
            log_lr: log_lr.clone(),
            threshold: h,
            horizon,
        };
        Ok(estimate_arl(model, &rule, horizon, config)?.estimate.value)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while arl(hi)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            break;
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if arl(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Run-length target for the CUSUM member, as a multiple of `γ`.
pub const CUSUM_TARGET_FACTOR: f64 = 1.25;
/// Truncation horizon of the CUSUM member, as a multiple of `γ`.
pub const CUSUM_HORIZON_FACTOR: f64 = 20.0;

/// One-sided, shifted two-sided, fixed-time, truncated CUSUM and both
/// Shewhart tests, each meeting the false-alarm constraint at `γ`.
pub fn gaussian_family(g: &GaussianShewhart, config: &RunConfig) -> Result<Vec<FamilyMember<f64>>, ShewhartError> {
    let gamma = g.gamma;
    let mut family = vec![FamilyMember {
        name: "one-sided".into(),
        rule: Arc::new(OneSided {
            cutoff: norm_quantile(1.0 - 1.0 / gamma)?,
        }),
    }];
    for shift in [0.5, 1.0] {
        family.push(FamilyMember {
            name: format!("two-sided shift {shift}"),
            rule: Arc::new(RegionRule {
                region: SymmetricRegion {
                    center: shift,
                    radius: shifted_cutoff(shift, gamma)?,
                },
            }),
        });
    }
    family.push(FamilyMember {
        name: "fixed time".into(),
        rule: fixed_time_mixture(gamma),
    });
    let horizon = (CUSUM_HORIZON_FACTOR * gamma).ceil() as u64;
    let log_lr: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(g.log_likelihood_ratio(Variant::S2));
    let calibration = RunConfig {
        seed: config.seed ^ 0xC05u64,
        ..*config
    };
    match calibrate_cusum(g.model(), log_lr.clone(), CUSUM_TARGET_FACTOR * gamma, horizon, &calibration) {
        Ok(threshold) => family.push(FamilyMember {
            name: format!("cusum h={threshold:.4}"),
            rule: Arc::new(TruncatedCusum {
                log_lr,
                threshold,
                horizon,
            }),
        }),
        Err(e) => {
            return Err(ShewhartError::UnsupportedPrior(format!("cusum calibration failed: {e}")));
        }
    }
    for v in [Variant::S1, Variant::S2] {
        family.push(FamilyMember {
            name: format!("shewhart {v}"),
            rule: Arc::new(g.policy(v)),
        });
    }
    Ok(family)
}

/// Runs the Gaussian family against both bounds.
pub fn theorem2_gaussian(g: &GaussianShewhart, k: f64, config: &RunConfig) -> Result<Theorem2Report, ShewhartError> {
    let family = gaussian_family(g, config)?;
    let (p1, p2) = (g.policy(Variant::S1), g.policy(Variant::S2));
    let (l1, l2) = (move |x: f64| p1.likelihood_ratio(x), move |x: f64| p2.likelihood_ratio(x));
    let references = [
        BoundReference {
            variant: Variant::S1,
            beta: g.beta1(),
            lr: &l1,
        },
        BoundReference {
            variant: Variant::S2,
            beta: g.beta2(),
            lr: &l2,
        },
    ];
    let cap = (CUSUM_HORIZON_FACTOR * g.gamma).ceil() as u64 * 3;
    theorem2_family_check(g.model(), g.gamma, &family, &references, cap, k, config)
        .map_err(|e| ShewhartError::UnsupportedPrior(e.to_string()))
}

/// Exact comparison of every calibrated one-step competitor with the
/// Shewhart tests on a finite model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOptimality {
    pub competitors: usize,
    pub beta1: f64,
    pub beta2: f64,
    /// Largest worst-state detection over competitors.
    pub max_worst_detection: f64,
    /// Largest exact bound ratio for each variant.
    pub max_ratio1: f64,
    pub max_ratio2: f64,
}

impl DiscreteOptimality {
    pub fn passed(&self) -> bool {
        self.max_worst_detection <= self.beta2 + EXACT_TOLERANCE
            && self.max_ratio1 <= self.beta1 + EXACT_TOLERANCE
            && self.max_ratio2 <= self.beta2 + EXACT_TOLERANCE
    }
}

/// For a memoryless `s` with rate `1/γ`, `E∞[L(ξ_T)] / E∞[T]` is exactly
/// `Σ_{f∞(x) > 0} f̄(x) s(x)`.
fn exact_ratio(density: &[f64], pre_obs: &[f64], stop: &[f64]) -> f64 {
    density
        .iter()
        .zip(pre_obs)
        .zip(stop)
        .filter(|((_, p), _)| **p > 0.0)
        .map(|((d, _), s)| d * s)
        .sum()
}

pub fn discrete_optimality_check(s: &DiscreteShewhart) -> Result<DiscreteOptimality, ShewhartError> {
    let hmm = s.hmm();
    let pre = &hmm.model().pre_obs;
    let competitors = competitor_family(pre, s.gamma, 0)?;
    let worst = |stop: &[f64]| {
        (0..hmm.state_count())
            .filter(|&z| hmm.model().stationary[z] > 0.0)
            .map(|z| super::per_state_detection_discrete(hmm, stop, z))
            .fold(f64::INFINITY, f64::min)
    };
    let max = |f: &dyn Fn(&[f64]) -> f64| competitors.iter().map(|c| f(c)).fold(f64::NEG_INFINITY, f64::max);
    Ok(DiscreteOptimality {
        competitors: competitors.len(),
        beta1: s.beta1(),
        beta2: s.beta2(),
        max_worst_detection: max(&|c| worst(c)),
        max_ratio1: max(&|c| exact_ratio(&s.density1, pre, c)),
        max_ratio2: max(&|c| exact_ratio(&s.density2, pre, c)),
    })
}

/// Monte-Carlo family check on a finite model: a sample of calibrated
/// one-step competitors plus both Shewhart tests.
pub fn theorem2_discrete(
    s: &DiscreteShewhart,
    max_members: usize,
    k: f64,
    config: &RunConfig,
) -> Result<Theorem2Report, ShewhartError> {
    let hmm = s.hmm();
    let pre = hmm.model().pre_obs.clone();
    let competitors = competitor_family(&pre, s.gamma, 0)?;
    let stride = competitors.len().div_ceil(max_members.max(1)).max(1);
    let mut family: Vec<FamilyMember<usize>> = competitors
        .into_iter()
        .step_by(stride)
        .enumerate()
        .map(|(i, c)| FamilyMember {
            name: format!("competitor {i}"),
            rule: Arc::new(StopTable::new(c, &pre)),
        })
        .collect();
    for v in [Variant::S1, Variant::S2] {
        family.push(FamilyMember {
            name: format!("shewhart {v}"),
            rule: Arc::new(StopTable::new(s.stop(v).to_vec(), &pre)),
        });
    }
    let (d1, d2, p1, p2) = (s.density1.clone(), s.density2.clone(), pre.clone(), pre.clone());
    let l1 = move |x: usize| d1[x] / p1[x];
    let l2 = move |x: usize| d2[x] / p2[x];
    let references = [
        BoundReference {
            variant: Variant::S1,
            beta: s.beta1(),
            lr: &l1,
        },
        BoundReference {
            variant: Variant::S2,
            beta: s.beta2(),
            lr: &l2,
        },
    ];
    let cap = (60.0 * s.gamma).ceil() as u64;
    theorem2_family_check(hmm, s.gamma, &family, &references, cap, k, config)
        .map_err(|e| ShewhartError::UnsupportedPrior(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_discrete, make_gaussian_ar1, random_discrete_model, GaussianAr1Params};
    use crate::shewhart::PriorMethod;

    fn paper(gamma: f64) -> GaussianShewhart {
        let m = make_gaussian_ar1(GaussianAr1Params {
            alpha: 0.5,
            mu: 1.0,
            sigma2: 0.5,
        })
        .unwrap();
        GaussianShewhart::new(&m, gamma).unwrap()
    }

    fn cfg(trials: u64) -> RunConfig {
        RunConfig {
            trials,
            seed: 21,
            workers: 4,
        }
    }

    #[test]
    fn stop_at_one_gives_unit_ratio() {
        let g = paper(100.0);
        let p = g.policy(Variant::S2);
        let lr = |x: f64| p.likelihood_ratio(x);
        let r = theorem1_ratio(g.model(), &FixedTime { time: 1 }, &lr, 10, &cfg(200_000)).unwrap();
        assert!(r.ratio.agrees_with(1.0, 3.0, 0.0), "{r:?}");
        assert_eq!(r.run_length.value, 1.0);
    }

    #[test]
    fn shewhart_attains_its_bound() {
        let g = paper(100.0);
        for v in [Variant::S1, Variant::S2] {
            let p = g.policy(v);
            let lr = |x: f64| p.likelihood_ratio(x);
            let beta = if v == Variant::S1 { g.beta1() } else { g.beta2() };
            let r = theorem1_ratio(g.model(), &p, &lr, 5000, &cfg(100_000)).unwrap();
            assert!(r.ratio.agrees_with(beta, 3.0, 0.0), "{v}: {r:?} vs {beta}");
            assert_eq!(r.truncated, 0);
        }
    }

    #[test]
    fn fixed_time_ratio_is_below_beta2() {
        for gamma in [2.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0] {
            assert!(1.0 / gamma <= paper(gamma).beta2(), "γ = {gamma}");
        }
    }

    #[test]
    fn shifted_cutoff_calibrates() {
        for s in [0.0, 0.5, 1.0] {
            let c = shifted_cutoff(s, 100.0).unwrap();
            let rate = norm_cdf(s - c) + norm_cdf(-s - c);
            assert!((rate * 100.0 - 1.0).abs() < 1e-9);
        }
        let c0 = shifted_cutoff(0.0, 1000.0).unwrap();
        assert!((c0 - 3.290526731).abs() < 1e-8);
    }

    #[test]
    fn gaussian_family_respects_bounds() {
        let g = paper(100.0);
        let r = theorem2_gaussian(&g, 3.0, &cfg(20_000)).unwrap();
        assert!(r.passed(), "{r:#?}");
        assert!(r.checked() >= 12, "{r:#?}");
    }

    #[test]
    fn discrete_competitors_never_beat_shewhart() {
        for seed in 0..15 {
            let hmm = make_discrete(random_discrete_model(3, 4, seed)).unwrap();
            for gamma in [3.0, 10.0, 40.0] {
                let s = DiscreteShewhart::new(&hmm, gamma, PriorMethod::FixedPoint).unwrap();
                let r = discrete_optimality_check(&s).unwrap();
                assert!(r.passed(), "seed {seed} γ {gamma}: {r:?}");
                assert!((r.max_ratio2 - r.beta2).abs() < 1e-12, "{r:?}");
            }
        }
    }

    #[test]
    fn discrete_family_respects_bounds() {
        let hmm = make_discrete(random_discrete_model(3, 3, 5)).unwrap();
        let s = DiscreteShewhart::new(&hmm, 10.0, PriorMethod::FixedPoint).unwrap();
        let r = theorem2_discrete(&s, 6, 3.0, &cfg(20_000)).unwrap();
        assert!(r.passed(), "{r:#?}");
    }
}
