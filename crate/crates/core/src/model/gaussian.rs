//! Gaussian AR(1) hidden mean: `ξ ~ N(0,1)` before the change, `ξ|z ~ N(z,1)`
//! after it, with `z_t = μ + v_t`, `v_t ~ N(α v_{t-1}, σ²)`. The hidden chain
//! keeps the same dynamics on both sides of the change.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ChangeModel, ModelError};
use crate::numerics::{default_rule, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianAr1Params {
    pub alpha: f64,
    pub mu: f64,
    pub sigma2: f64,
}

impl GaussianAr1Params {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.alpha.is_finite() || self.alpha.abs() >= 1.0 {
            return Err(ModelError::InvalidParameter {
                field: "alpha",
                reason: format!("|alpha| must be < 1, got {}", self.alpha),
            });
        }
        if !self.mu.is_finite() {
            return Err(ModelError::InvalidParameter {
                field: "mu",
                reason: format!("must be finite, got {}", self.mu),
            });
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(ModelError::InvalidParameter {
                field: "sigma2",
                reason: format!("must be positive, got {}", self.sigma2),
            });
        }
        Ok(())
    }

    /// Stationary variance `σ²/(1-α²)`.
    pub fn stationary_var(&self) -> f64 {
        self.sigma2 / (1.0 - self.alpha * self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAr1 {
    params: GaussianAr1Params,
    stationary: Normal,
    sigma: f64,
}

pub fn make_gaussian_ar1(params: GaussianAr1Params) -> Result<GaussianAr1, ModelError> {
    params.validate()?;
    let model = GaussianAr1 {
        params,
        stationary: Normal {
            mean: params.mu,
            var: params.stationary_var(),
        },
        sigma: params.sigma2.sqrt(),
    };
    let norm = model.normalization_residual();
    let stat = model.stationarity_residual();
    if norm > super::CONTINUOUS_CHECK_TOL || stat > super::CONTINUOUS_CHECK_TOL {
        return Err(ModelError::InvalidParameter {
            field: "sigma2",
            reason: format!(
                "construction checks failed (normalization {norm:e}, stationarity {stat:e})"
            ),
        });
    }
    Ok(model)
}

impl GaussianAr1 {
    pub fn params(&self) -> GaussianAr1Params {
        self.params
    }

    pub fn stationary(&self) -> Normal {
        self.stationary
    }

    /// Mean of `z_t` given `z_{t-1}`.
    #[inline]
    pub fn transition_mean(&self, from: f64) -> f64 {
        (1.0 - self.params.alpha) * self.params.mu + self.params.alpha * from
    }

    pub fn transition(&self, from: f64) -> Normal {
        Normal {
            mean: self.transition_mean(from),
            var: self.params.sigma2,
        }
    }

    /// `f₀(ξ|z_{t-1}) = ∫ f₀(ξ|z) g₀(z|z_{t-1}) dz`, i.e.
    /// `N((1-α)μ + α z_{t-1}, 1 + σ²)`.
    pub fn post_conditional_obs(&self, z_prev: f64) -> Normal {
        Normal {
            mean: self.transition_mean(z_prev),
            var: 1.0 + self.params.sigma2,
        }
    }

    /// The state minimizing the conditional mean's magnitude,
    /// `z* = -μ(1-α)/α`. `None` for `α = 0`, where every state is equivalent.
    pub fn worst_state(&self) -> Option<f64> {
        let GaussianAr1Params { alpha, mu, .. } = self.params;
        (alpha != 0.0).then(|| -mu * (1.0 - alpha) / alpha)
    }
}

impl ChangeModel for GaussianAr1 {
    type State = f64;
    type Obs = f64;

    fn pre_obs_density(&self, x: f64) -> f64 {
        crate::numerics::norm_pdf(x)
    }

    fn post_obs_density(&self, x: f64, z: f64) -> f64 {
        crate::numerics::norm_pdf(x - z)
    }

    fn pre_transition(&self, to: f64, from: f64) -> f64 {
        self.transition(from).pdf(to)
    }

    fn post_transition(&self, to: f64, from: f64) -> f64 {
        self.transition(from).pdf(to)
    }

    fn stationary_density(&self, z: f64) -> f64 {
        self.stationary.pdf(z)
    }

    fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        self.stationary.mean + self.stationary.sd() * e
    }

    fn sample_pre_transition<R: Rng + ?Sized>(&self, from: f64, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        self.transition_mean(from) + self.sigma * e
    }

    fn sample_post_transition<R: Rng + ?Sized>(&self, from: f64, rng: &mut R) -> f64 {
        self.sample_pre_transition(from, rng)
    }

    fn sample_pre_obs<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }

    fn sample_post_obs<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        z + e
    }

    /// Rejection from the uniform law on the band, accepting with probability
    /// proportional to the stationary density.
    fn sample_stationary_near<R: Rng + ?Sized>(
        &self,
        target: f64,
        band: f64,
        rng: &mut R,
    ) -> Option<f64> {
        if !(band > 0.0) {
            return None;
        }
        let (lo, hi) = (target - band, target + band);
        let m = self.stationary.mean;
        let peak = if m < lo {
            self.stationary.ln_pdf(lo)
        } else if m > hi {
            self.stationary.ln_pdf(hi)
        } else {
            self.stationary.ln_pdf(m)
        };
        // Acceptance ratio below e^-40 means the band is far too wide for
        // rejection to terminate in reasonable time.
        let floor = self.stationary.ln_pdf(lo).min(self.stationary.ln_pdf(hi));
        if peak - floor > 40.0 {
            return None;
        }
        loop {
            let z = rng.random_range(lo..=hi);
            let u: f64 = rng.random();
            if u.ln() <= self.stationary.ln_pdf(z) - peak {
                return Some(z);
            }
        }
    }

    fn state_distance(&self, a: f64, b: f64) -> f64 {
        (a - b).abs()
    }

    /// Total masses checked by quadrature against a wider Gaussian reference.
    fn normalization_residual(&self) -> f64 {
        let rule = default_rule();
        let mass = |d: &dyn Fn(f64) -> f64, reference: Normal| {
            rule.expect(|x| d(x) / reference.pdf(x), reference.mean, reference.var)
        };
        let widen = |n: Normal| Normal {
            mean: n.mean,
            var: 2.0 * n.var,
        };
        let z_probe = [self.stationary.mean, self.stationary.mean + self.stationary.sd()];
        let mut worst: f64 =
            (mass(&|x| self.pre_obs_density(x), widen(Normal { mean: 0.0, var: 1.0 })) - 1.0).abs();
        worst = worst.max((mass(&|z| self.stationary_density(z), widen(self.stationary)) - 1.0).abs());
        for &z in &z_probe {
            let obs = Normal { mean: z, var: 1.0 };
            worst = worst.max((mass(&|x| self.post_obs_density(x, z), widen(obs)) - 1.0).abs());
            let tr = self.transition(z);
            worst = worst.max((mass(&|y| self.pre_transition(y, z), widen(tr)) - 1.0).abs());
            worst = worst.max((mass(&|y| self.post_transition(y, z), widen(tr)) - 1.0).abs());
        }
        worst
    }

    /// Checked on a 41-point grid spanning six stationary standard deviations.
    /// Each integral uses a reference law centred where the integrand has its
    /// mass, so that strongly persistent chains stay resolved.
    fn stationarity_residual(&self) -> f64 {
        let rule = default_rule();
        let GaussianAr1Params { alpha, mu, sigma2 } = self.params;
        let (m, sd) = (self.stationary.mean, self.stationary.sd());
        let s2 = self.stationary.var;
        let post_var = 1.0 / (alpha * alpha / sigma2 + 1.0 / s2);
        (0..41)
            .map(|i| {
                let zp = m - 6.0 * sd + 12.0 * sd * i as f64 / 40.0;
                let post_mean =
                    post_var * (alpha * (zp - (1.0 - alpha) * mu) / sigma2 + mu / s2);
                let reference = Normal {
                    mean: post_mean,
                    var: 2.0 * post_var,
                };
                let pushed = rule.expect(
                    |z| self.pre_transition(zp, z) * self.stationary_density(z) / reference.pdf(z),
                    reference.mean,
                    reference.var,
                );
                (pushed - self.stationary_density(zp)).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_trajectory, ChangeTime};
    use crate::numerics::{gauss_hermite_expect, rng_stream};

    fn figure_model() -> GaussianAr1 {
        make_gaussian_ar1(GaussianAr1Params {
            alpha: 0.5,
            mu: 1.0,
            sigma2: 0.5,
        })
        .unwrap()
    }

    #[test]
    fn stationary_variance() {
        let m = figure_model();
        assert!((m.stationary().var - 2.0 / 3.0).abs() < 1e-15);
        assert!(m.stationarity_residual() < 1e-8);

        let iid = make_gaussian_ar1(GaussianAr1Params {
            alpha: 0.0,
            mu: 0.0,
            sigma2: 1.0,
        })
        .unwrap();
        assert_eq!(iid.stationary(), Normal { mean: 0.0, var: 1.0 });
        assert_eq!(iid.transition(5.0), Normal { mean: 0.0, var: 1.0 });
    }

    #[test]
    fn rejects_bad_parameters() {
        for (alpha, sigma2, field) in [(1.0, 0.5, "alpha"), (-1.2, 0.5, "alpha"), (0.3, 0.0, "sigma2"), (0.3, -1.0, "sigma2")] {
            let err = make_gaussian_ar1(GaussianAr1Params { alpha, mu: 0.0, sigma2 }).unwrap_err();
            assert!(matches!(err, ModelError::InvalidParameter { field: f, .. } if f == field));
        }
    }

    #[test]
    fn conditional_obs_density_closed_form() {
        let m = figure_model();
        assert_eq!(m.post_conditional_obs(-1.0), Normal { mean: 0.0, var: 1.5 });
        let flat = make_gaussian_ar1(GaussianAr1Params {
            alpha: 0.0,
            mu: 0.7,
            sigma2: 0.4,
        })
        .unwrap();
        for z in [-3.0, 0.0, 9.0] {
            assert_eq!(flat.post_conditional_obs(z), Normal { mean: 0.7, var: 1.4 });
        }
        // Quadrature over z_t ~ g₀(·|z_prev).
        for z_prev in [-2.0, -1.0, 0.5] {
            let closed = m.post_conditional_obs(z_prev);
            for k in -3..=3 {
                let x = k as f64;
                let tr = m.transition(z_prev);
                let quad =
                    gauss_hermite_expect(|z| m.post_obs_density(x, z), tr.mean, tr.var, 64).unwrap();
                assert!((quad - closed.pdf(x)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn worst_state() {
        assert_eq!(figure_model().worst_state(), Some(-1.0));
        let neg = make_gaussian_ar1(GaussianAr1Params {
            alpha: -0.5,
            mu: 1.0,
            sigma2: 0.5,
        })
        .unwrap();
        let z = neg.worst_state().unwrap();
        assert!((z - 3.0).abs() < 1e-15);
        assert!(neg.transition_mean(z).abs() < 1e-15);
    }

    #[test]
    fn nominal_observation_moments() {
        let m = figure_model();
        let mut rng = rng_stream(1, 0);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_trajectory(&m, ChangeTime::Never, 1, &mut rng).observations[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.003, "{mean}");
        assert!((var - 1.0).abs() < 0.005, "{var}");
    }

    #[test]
    fn immediate_change_observation_moments() {
        let m = figure_model();
        let mut rng = rng_stream(2, 0);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_trajectory(&m, ChangeTime::At(0), 1, &mut rng).observations[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 0.004, "{mean}");
        assert!((var - 5.0 / 3.0).abs() < 0.01, "{var}");
    }

    /// Two-sample Kolmogorov-Smirnov: ξ₃ under τ=5 vs τ=∞.
    #[test]
    fn pre_change_segment_is_nominal() {
        let m = figure_model();
        let n = 100_000;
        let draw = |tau, seed| {
            let mut rng = rng_stream(seed, 0);
            let mut v: Vec<f64> = (0..n)
                .map(|_| sample_trajectory(&m, tau, 3, &mut rng).observations[2])
                .collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let a = draw(ChangeTime::At(5), 3);
        let b = draw(ChangeTime::Never, 4);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < n && j < n {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 - j as f64).abs() / n as f64);
        }
        // 1% critical value: 1.628 * sqrt(2/n).
        assert!(d < 1.628 * (2.0 / n as f64).sqrt(), "KS = {d}");
    }

    /// Lag-1 autocovariance about a known mean, replicated over independent
    /// runs so the standard error accounts for serial dependence.
    fn lag1_replicated(m: &GaussianAr1, tau: ChangeTime, mean: f64, seed: u64) -> (f64, f64) {
        let mut rng = rng_stream(seed, 0);
        let runs = 400;
        let covs: Vec<f64> = (0..runs)
            .map(|_| {
                let xs = sample_trajectory(m, tau, 1000, &mut rng).observations;
                xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>()
                    / (xs.len() - 1) as f64
            })
            .collect();
        let avg = covs.iter().sum::<f64>() / runs as f64;
        let sd = (covs.iter().map(|c| (c - avg).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt();
        (avg, sd / (runs as f64).sqrt())
    }

    #[test]
    fn autocovariance_before_and_after_change() {
        let m = figure_model();
        let (cov, se) = lag1_replicated(&m, ChangeTime::Never, 0.0, 5);
        assert!(cov.abs() < 3.0 * se, "nominal lag-1 cov {cov} (se {se})");

        let (cov, se) = lag1_replicated(&m, ChangeTime::At(0), 1.0, 6);
        let want = 0.5 * 0.5 / 0.75;
        assert!(cov > 0.0);
        assert!((cov - want).abs() < 3.0 * se, "post lag-1 cov {cov} vs {want} (se {se})");
    }

    #[test]
    fn band_sampler_stays_in_band() {
        let m = figure_model();
        let mut rng = rng_stream(8, 0);
        for _ in 0..1000 {
            let z = m.sample_stationary_near(-4.0, 0.01, &mut rng).unwrap();
            assert!((z + 4.0).abs() <= 0.01);
        }
        assert!(m.sample_stationary_near(0.0, 0.0, &mut rng).is_none());
    }
}
