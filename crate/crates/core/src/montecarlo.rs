//! Seeded, partitioned Monte-Carlo runs.
//!
//! Trials are split into `workers` contiguous partitions. Partition `i` draws
//! from `rng_stream(seed, offset + i)` and partitions are reduced in index
//! order, so results are bit-identical for a fixed `(seed, workers)` pair no
//! matter how many threads execute them.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::rng_stream;

/// Smallest Monte-Carlo budget accepted by the estimators.
pub const MIN_TRIALS: u64 = 10_000;

/// Shared Monte-Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
}

impl RunConfig {
    /// `Err((trials, MIN_TRIALS))` when the budget is too small.
    pub fn check(&self) -> Result<(), (u64, u64)> {
        if self.trials < MIN_TRIALS {
            return Err((self.trials, MIN_TRIALS));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_error: f64,
    pub trials: u64,
    pub seed: u64,
    /// Trials that survived the conditioning event. For importance-weighted
    /// estimates this is the rounded effective sample size.
    pub conditioning_count: u64,
}

impl MonteCarloEstimate {
    /// `|value - reference| <= k·SE + slack`
    pub fn agrees_with(&self, reference: f64, k: f64, slack: f64) -> bool {
        (self.value - reference).abs() <= k * self.std_error + slack
    }

    /// Standardized distance from `reference`.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.value - reference) / self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partition {
    pub index: usize,
    pub trials: u64,
}

pub fn partitions(trials: u64, workers: usize) -> Vec<Partition> {
    let workers = workers.max(1);
    let base = trials / workers as u64;
    let extra = trials % workers as u64;
    (0..workers)
        .map(|index| Partition {
            index,
            trials: base + u64::from((index as u64) < extra),
        })
        .collect()
}

/// Runs `f` once per partition and returns the results in partition order.
pub fn run_partitioned<T, F>(seed: u64, stream_offset: u64, trials: u64, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Partition, &mut ChaCha8Rng) -> T + Sync,
{
    partitions(trials, workers)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng_stream(seed, stream_offset + p.index as u64);
            f(p, &mut rng)
        })
        .collect()
}

/// Running sums for a sample mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanTally {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MeanTally {
    #[inline]
    pub fn add(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn std_error(&self) -> f64 {
        let n = self.n as f64;
        let var = (self.sum_sq - self.sum * self.sum / n) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    }
}

/// Weighted frequency `Σ w d / Σ w` with its linearized standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WeightedTally {
    pub n: u64,
    pub sum_w: f64,
    pub sum_wd: f64,
    pub sum_w2: f64,
    pub sum_w2d: f64,
    pub sum_w2d2: f64,
}

impl WeightedTally {
    #[inline]
    pub fn add(&mut self, w: f64, d: f64) {
        self.n += 1;
        self.sum_w += w;
        self.sum_wd += w * d;
        self.sum_w2 += w * w;
        self.sum_w2d += w * w * d;
        self.sum_w2d2 += w * w * d * d;
    }

    pub fn merge(mut self, o: Self) -> Self {
        self.n += o.n;
        self.sum_w += o.sum_w;
        self.sum_wd += o.sum_wd;
        self.sum_w2 += o.sum_w2;
        self.sum_w2d += o.sum_w2d;
        self.sum_w2d2 += o.sum_w2d2;
        self
    }

    pub fn ratio(&self) -> f64 {
        self.sum_wd / self.sum_w
    }

    pub fn std_error(&self) -> f64 {
        let r = self.ratio();
        let num = self.sum_w2d2 - 2.0 * r * self.sum_w2d + r * r * self.sum_w2;
        num.max(0.0).sqrt() / self.sum_w
    }

    /// Kish effective sample size `(Σw)²/Σw²`.
    pub fn effective_size(&self) -> f64 {
        if self.sum_w2 > 0.0 {
            self.sum_w * self.sum_w / self.sum_w2
        } else {
            0.0
        }
    }
}

/// Ratio of means `E[A]/E[B]` with a delta-method standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RatioTally {
    pub n: u64,
    pub a: f64,
    pub b: f64,
    pub aa: f64,
    pub bb: f64,
    pub ab: f64,
}

impl RatioTally {
    #[inline]
    pub fn add(&mut self, a: f64, b: f64) {
        self.n += 1;
        self.a += a;
        self.b += b;
        self.aa += a * a;
        self.bb += b * b;
        self.ab += a * b;
    }

    pub fn merge(mut self, o: Self) -> Self {
        self.n += o.n;
        self.a += o.a;
        self.b += o.b;
        self.aa += o.aa;
        self.bb += o.bb;
        self.ab += o.ab;
        self
    }

    pub fn ratio(&self) -> f64 {
        self.a / self.b
    }

    pub fn std_error(&self) -> f64 {
        let n = self.n as f64;
        let (ma, mb) = (self.a / n, self.b / n);
        let r = ma / mb;
        let var_a = self.aa / n - ma * ma;
        let var_b = self.bb / n - mb * mb;
        let cov = self.ab / n - ma * mb;
        let var = (var_a - 2.0 * r * cov + r * r * var_b).max(0.0) * n / (n - 1.0);
        (var / n).sqrt() / mb
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn partitions_cover_all_trials() {
        let p = partitions(10, 3);
        assert_eq!(p.iter().map(|p| p.trials).collect::<Vec<_>>(), vec![4, 3, 3]);
        assert_eq!(partitions(5, 0).len(), 1);
    }

    #[test]
    fn partitioned_runs_are_reproducible() {
        let run = || {
            run_partitioned(42, 0, 100_000, 4, |p, rng| {
                let mut t = MeanTally::default();
                for _ in 0..p.trials {
                    t.add(rng.random::<f64>());
                }
                t
            })
            .into_iter()
            .fold(MeanTally::default(), MeanTally::merge)
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_eq!(a.n, 100_000);
        assert!((a.mean() - 0.5).abs() < 3.0 * a.std_error() + 1e-12);
        assert!((a.std_error() - (1.0f64 / 12.0 / 1e5).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn weighted_tally_reduces_to_binomial() {
        let mut t = WeightedTally::default();
        for i in 0..1000 {
            t.add(1.0, f64::from(i % 4 == 0));
        }
        assert!((t.ratio() - 0.25).abs() < 1e-15);
        let binomial = (0.25f64 * 0.75 / 1000.0).sqrt();
        assert!((t.std_error() - binomial).abs() < 1e-12);
        assert!((t.effective_size() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn ratio_tally_constant_ratio_has_zero_error() {
        let mut t = RatioTally::default();
        for i in 1..100 {
            t.add(2.0 * i as f64, i as f64);
        }
        assert!((t.ratio() - 2.0).abs() < 1e-15);
        assert!(t.std_error() < 1e-9);
    }
}
