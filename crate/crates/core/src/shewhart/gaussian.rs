//! Closed forms for the Gaussian AR(1) model.
//!
//! Both averaged densities are normal, `N(a, v)` with `v > 1`, so each
//! likelihood ratio against `N(0,1)` is increasing in `|ξ + a/(v-1)|` and the
//! tests reduce to symmetric regions in observation space.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    check_gamma, CalibrationResult, ShewhartError, ShewhartPolicy, SymmetricRegion, Variant,
    WorstCasePrior,
};
use crate::model::{ChangeModel, GaussianAr1};
use crate::numerics::{
    default_rule, minimize_unimodal, solve_monotone_root, Normal, RootBracket,
    ROOT_TOLERANCE,
};

/// The four detection probabilities and both thresholds at one `γ`.
/// Thresholds are observation-space radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianQuantities {
    pub gamma: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta1_tilde: f64,
    pub beta2_tilde: f64,
}

impl GaussianQuantities {
    /// Values approached as `γ → 1⁺`: zero thresholds, certain alarms.
    pub fn limit_at_one() -> Self {
        Self {
            gamma: 1.0,
            nu1: 0.0,
            nu2: 0.0,
            beta1: 1.0,
            beta2: 1.0,
            beta1_tilde: 1.0,
            beta2_tilde: 1.0,
        }
    }
}

/// `f̄₀¹ = N(μ, 1 + σ²/(1-α²))`.
pub fn averaged_density_1(model: &GaussianAr1) -> Normal {
    let s = model.stationary();
    Normal {
        mean: s.mean,
        var: 1.0 + s.var,
    }
}

/// `f̄₀²` for a point-mass prior, or `f̄₀¹` when the prior is the degenerate
/// stationary one.
pub fn averaged_density_2(
    model: &GaussianAr1,
    prior: &WorstCasePrior<f64>,
) -> Result<Normal, ShewhartError> {
    if prior.degenerate {
        return Ok(averaged_density_1(model));
    }
    match prior.support.as_slice() {
        [z] => Ok(model.post_conditional_obs(*z)),
        other => Err(ShewhartError::UnsupportedPrior(format!(
            "closed form needs a single support point, got {}",
            other.len()
        ))),
    }
}

/// `ln L(ξ)` for `N(a, v)` against `N(0, 1)`.
fn log_lr(density: Normal, x: f64) -> f64 {
    density.ln_pdf(x) + 0.5 * x * x + 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Calibrates the likelihood-ratio test of `density` against `N(0,1)` to a
/// one-step alarm rate of `1/γ`.
pub fn calibrate_gaussian(density: Normal, gamma: f64) -> Result<CalibrationResult, ShewhartError> {
    check_gamma(gamma)?;
    if !(density.var > 1.0) {
        return Err(ShewhartError::UnsupportedPrior(format!(
            "averaged density variance must exceed 1, got {}",
            density.var
        )));
    }
    let center = -density.mean / (density.var - 1.0);
    let nominal = Normal { mean: 0.0, var: 1.0 };
    let target = 1.0 / gamma;
    let excess = |r: f64| nominal.prob_outside(center, r) - target;
    let mut hi = 1.0;
    while excess(hi) > 0.0 {
        hi *= 2.0;
    }
    let radius = solve_monotone_root(excess, RootBracket::new(excess, 0.0, hi)?, ROOT_TOLERANCE)?;
    let rate = nominal.prob_outside(center, radius);
    Ok(CalibrationResult {
        gamma,
        threshold: log_lr(density, center + radius).exp(),
        randomization: 0.0,
        residual: (1.0 - gamma * rate).abs() / (gamma * rate),
        observation_form: Some(SymmetricRegion { center, radius }),
    })
}

/// The worst-case prior: a point mass at `z* = -μ(1-α)/α`, where the
/// conditional observation law is centred on the variant-2 region.
pub fn solve_worst_case_prior_gaussian(
    model: &GaussianAr1,
    gamma: f64,
) -> Result<(WorstCasePrior<f64>, CalibrationResult), ShewhartError> {
    check_gamma(gamma)?;
    let Some(z) = model.worst_state() else {
        // Flat in the previous state: the empty support stands for the stationary law.
        let cal = calibrate_gaussian(averaged_density_1(model), gamma)?;
        let region = cal.observation_form.expect("gaussian calibration has a region");
        let beta2 = model.post_conditional_obs(0.0).prob_outside(region.center, region.radius);
        let prior = WorstCasePrior {
            support: Vec::new(),
            weights: Vec::new(),
            beta2,
            equalization_residual: 0.0,
            degenerate: true,
        };
        return Ok((prior, cal));
    };
    let density = model.post_conditional_obs(z);
    let cal = calibrate_gaussian(density, gamma)?;
    let region = cal.observation_form.expect("gaussian calibration has a region");
    let beta2 = density.prob_outside(region.center, region.radius);
    let prior = WorstCasePrior {
        support: vec![z],
        weights: vec![1.0],
        beta2,
        equalization_residual: (density.prob_outside(region.center, region.radius) - beta2).abs(),
        degenerate: false,
    };
    Ok((prior, cal))
}

/// Both calibrated tests for one Gaussian model and `γ`.
#[derive(Debug, Clone)]
pub struct GaussianShewhart {
    model: GaussianAr1,
    pub gamma: f64,
    pub density1: Normal,
    pub density2: Normal,
    pub calibration1: CalibrationResult,
    pub calibration2: CalibrationResult,
    pub prior: WorstCasePrior<f64>,
}

impl GaussianShewhart {
    pub fn new(model: &GaussianAr1, gamma: f64) -> Result<Self, ShewhartError> {
        let density1 = averaged_density_1(model);
        let calibration1 = calibrate_gaussian(density1, gamma)?;
        let (prior, calibration2) = solve_worst_case_prior_gaussian(model, gamma)?;
        let density2 = averaged_density_2(model, &prior)?;
        Ok(Self {
            model: model.clone(),
            gamma,
            density1,
            density2,
            calibration1,
            calibration2,
            prior,
        })
    }

    pub fn model(&self) -> &GaussianAr1 {
        &self.model
    }

    pub fn density(&self, variant: Variant) -> Normal {
        match variant {
            Variant::S1 => self.density1,
            Variant::S2 => self.density2,
        }
    }

    pub fn calibration(&self, variant: Variant) -> &CalibrationResult {
        match variant {
            Variant::S1 => &self.calibration1,
            Variant::S2 => &self.calibration2,
        }
    }

    pub fn region(&self, variant: Variant) -> SymmetricRegion {
        self.calibration(variant)
            .observation_form
            .expect("gaussian calibration has a region")
    }

    /// Observation-space threshold `ν_j`.
    pub fn nu(&self, variant: Variant) -> f64 {
        self.region(variant).radius
    }

    pub fn policy(&self, variant: Variant) -> ShewhartPolicy<f64> {
        let density = self.density(variant);
        let region = self.region(variant);
        ShewhartPolicy::new(
            variant,
            self.calibration(variant),
            Arc::new(move |x| log_lr(density, x).exp()),
            Arc::new(move |x| density.pdf(x)),
            Arc::new(move |x| if region.contains(x) { 1.0 } else { 0.0 }),
        )
    }

    /// `log L_j`, for CUSUM-type competitors.
    pub fn log_likelihood_ratio(&self, variant: Variant) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
        let density = self.density(variant);
        move |x| log_lr(density, x)
    }

    /// One-step detection probability of test `variant` when the change
    /// follows pre-change state `z_prev`.
    pub fn per_state_detection(&self, variant: Variant, z_prev: f64) -> f64 {
        let r = self.region(variant);
        self.model
            .post_conditional_obs(z_prev)
            .prob_outside(r.center, r.radius)
    }

    /// The pre-change state minimizing [`Self::per_state_detection`], `None`
    /// when detection does not depend on it.
    pub fn worst_state(&self, variant: Variant) -> Option<f64> {
        let p = self.model.params();
        if p.alpha == 0.0 {
            return None;
        }
        Some((self.region(variant).center - (1.0 - p.alpha) * p.mu) / p.alpha)
    }

    pub fn beta1(&self) -> f64 {
        let r = self.region(Variant::S1);
        self.density1.prob_outside(r.center, r.radius)
    }

    pub fn beta2(&self) -> f64 {
        self.prior.beta2
    }

    /// Variant 1 against an adversary that sees the state.
    pub fn beta1_tilde(&self) -> f64 {
        match self.worst_state(Variant::S1) {
            Some(z) => self.per_state_detection(Variant::S1, z),
            None => self.per_state_detection(Variant::S1, 0.0),
        }
    }

    /// Variant 2 against an adversary that does not see the state.
    pub fn beta2_tilde(&self) -> f64 {
        let r = self.region(Variant::S2);
        self.density1.prob_outside(r.center, r.radius)
    }

    /// Worst-case detection of `variant` against a state-aware adversary.
    pub fn state_aware_detection(&self, variant: Variant) -> f64 {
        match variant {
            Variant::S1 => self.beta1_tilde(),
            Variant::S2 => self.beta2(),
        }
    }

    /// Worst-case detection of `variant` against a state-blind adversary.
    pub fn state_blind_detection(&self, variant: Variant) -> f64 {
        match variant {
            Variant::S1 => self.beta1(),
            Variant::S2 => self.beta2_tilde(),
        }
    }

    /// Largest `|D(z) - D(z_w)|` over `|z - z_w| <= band`, where `z_w` is the
    /// worst state for `variant`. Bounds the bias of an adversary that acts
    /// anywhere in the band.
    pub fn band_bias_bound(&self, variant: Variant, band: f64) -> f64 {
        let Some(z) = self.worst_state(variant) else {
            return 0.0;
        };
        let d = self.per_state_detection(variant, z);
        [z - band, z + band]
            .iter()
            .map(|&e| (self.per_state_detection(variant, e) - d).abs())
            .fold(0.0, f64::max)
    }

    pub fn quantities(&self) -> GaussianQuantities {
        GaussianQuantities {
            gamma: self.gamma,
            nu1: self.nu(Variant::S1),
            nu2: self.nu(Variant::S2),
            beta1: self.beta1(),
            beta2: self.beta2(),
            beta1_tilde: self.beta1_tilde(),
            beta2_tilde: self.beta2_tilde(),
        }
    }

    /// The same six quantities evaluated by nested Gauss-Hermite quadrature
    /// over the hidden states, using only the model's densities.
    pub fn quantities_by_quadrature(&self) -> GaussianQuantities {
        let r1 = self.region(Variant::S1);
        let r2 = self.region(Variant::S2);
        GaussianQuantities {
            gamma: self.gamma,
            nu1: r1.radius,
            nu2: r2.radius,
            beta1: stationary_detection_quadrature(&self.model, r1),
            beta2: worst_detection_quadrature(&self.model, r2).1,
            beta1_tilde: worst_detection_quadrature(&self.model, r1).1,
            beta2_tilde: stationary_detection_quadrature(&self.model, r2),
        }
    }
}

/// `P(|ξ - c| >= r)` for `ξ ~ f₀(·|z)`, integrated in closed form over `ξ`.
fn obs_tail_given_state(z: f64, region: SymmetricRegion) -> f64 {
    Normal { mean: z, var: 1.0 }.prob_outside(region.center, region.radius)
}

/// `f̄₀¹(ξ) = ∬ f₀(ξ|z) g₀(z|z') g∞(z') dz dz'` by nested quadrature.
pub fn averaged_density_1_quadrature(model: &GaussianAr1, x: f64) -> f64 {
    let rule = default_rule();
    let s = model.stationary();
    rule.expect(
        |zp| averaged_density_2_quadrature(model, zp, x),
        s.mean,
        s.var,
    )
}

/// `∫ f₀(ξ|z) g₀(z|z') dz` for a point-mass prior at `z'`.
pub fn averaged_density_2_quadrature(model: &GaussianAr1, z_prev: f64, x: f64) -> f64 {
    let t = model.transition(z_prev);
    default_rule().expect(|z| model.post_obs_density(x, z), t.mean, t.var)
}

/// One-step detection probability of `region` after pre-change state `z_prev`.
pub fn detection_quadrature(model: &GaussianAr1, z_prev: f64, region: SymmetricRegion) -> f64 {
    let t = model.transition(z_prev);
    default_rule().expect(|z| obs_tail_given_state(z, region), t.mean, t.var)
}

/// Detection probability averaged over a stationary pre-change state.
pub fn stationary_detection_quadrature(model: &GaussianAr1, region: SymmetricRegion) -> f64 {
    let s = model.stationary();
    default_rule().expect(|zp| detection_quadrature(model, zp, region), s.mean, s.var)
}

/// `(argmin, min)` of [`detection_quadrature`] over the state line, by a grid
/// scan followed by golden-section refinement.
pub fn worst_detection_quadrature(model: &GaussianAr1, region: SymmetricRegion) -> (f64, f64) {
    let s = model.stationary();
    let half = 40.0 * s.sd().max(1.0) + region.center.abs() / model.params().alpha.abs().max(1e-3);
    let n = 801;
    let step = 2.0 * half / (n - 1) as f64;
    let d = |zp: f64| detection_quadrature(model, zp, region);
    let best = (0..n)
        .map(|i| s.mean - half + step * i as f64)
        .min_by(|a, b| d(*a).total_cmp(&d(*b)))
        .expect("grid is nonempty");
    minimize_unimodal(d, best - step, best + step, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_gaussian_ar1, GaussianAr1Params};
    use crate::numerics::{norm_cdf, norm_quantile};

    fn paper_model() -> GaussianAr1 {
        make_gaussian_ar1(GaussianAr1Params {
            alpha: 0.5,
            mu: 1.0,
            sigma2: 0.5,
        })
        .unwrap()
    }

    /// Independent bisection on the two-term calibration equation.
    fn nu1_oracle(m: f64, gamma: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_cdf(m - mid) + norm_cdf(-m - mid) > 1.0 / gamma {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn averaged_densities() {
        let m = paper_model();
        let d1 = averaged_density_1(&m);
        assert!((d1.mean - 1.0).abs() < 1e-15 && (d1.var - 5.0 / 3.0).abs() < 1e-15);
        let g = GaussianShewhart::new(&m, 1000.0).unwrap();
        assert_eq!(g.prior.support, vec![-1.0]);
        assert!(g.density2.mean.abs() < 1e-15 && (g.density2.var - 1.5).abs() < 1e-15);

        let tiny = make_gaussian_ar1(GaussianAr1Params {
            alpha: 0.0,
            mu: 0.7,
            sigma2: 1e-8,
        })
        .unwrap();
        let d = averaged_density_1(&tiny);
        assert!((d.mean - 0.7).abs() < 1e-15 && (d.var - 1.0).abs() < 1e-7);
    }

    #[test]
    fn calibration_matches_oracles() {
        let m = paper_model();
        for gamma in [2.0, 10.0, 100.0, 1000.0] {
            let g = GaussianShewhart::new(&m, gamma).unwrap();
            let nu2 = g.nu(Variant::S2);
            assert!((2.0 * norm_cdf(-nu2) - 1.0 / gamma).abs() <= 1e-10);
            assert!((nu2 + norm_quantile(0.5 / gamma).unwrap()).abs() < 1e-9);
            let nu1 = g.nu(Variant::S1);
            assert!((norm_cdf(1.5 - nu1) + norm_cdf(-1.5 - nu1) - 1.0 / gamma).abs() <= 1e-10);
            assert!((nu1 - nu1_oracle(1.5, gamma)).abs() < 1e-9);
            assert!((g.region(Variant::S1).center + 1.5).abs() < 1e-12);
            assert!(g.calibration1.residual < 1e-9 && g.calibration2.residual < 1e-9);
        }
        let g = GaussianShewhart::new(&m, 1000.0).unwrap();
        assert!((g.nu(Variant::S2) - 3.29053).abs() < 1e-4);
        assert!((g.nu(Variant::S1) - 4.5902).abs() < 1e-3);
        let g = GaussianShewhart::new(&m, 100.0).unwrap();
        assert!((g.nu(Variant::S1) - 3.8264).abs() < 1e-3);
    }

    #[test]
    fn calibration_near_one() {
        let m = paper_model();
        let g = GaussianShewhart::new(&m, 1.0 + 1e-9).unwrap();
        assert!(g.nu(Variant::S2) < 1e-8);
        assert!(g.beta2() > 1.0 - 1e-8 && g.beta1() > 1.0 - 1e-8);
        assert!(matches!(
            GaussianShewhart::new(&m, 1.0),
            Err(ShewhartError::InvalidGamma(_))
        ));
    }

    #[test]
    fn threshold_in_lr_units_sits_on_region_boundary() {
        let g = GaussianShewhart::new(&paper_model(), 100.0).unwrap();
        for v in [Variant::S1, Variant::S2] {
            let p = g.policy(v);
            let r = g.region(v);
            for x in [r.center + r.radius, r.center - r.radius] {
                assert!((p.likelihood_ratio(x) / p.threshold - 1.0).abs() < 1e-10);
            }
            assert!(p.likelihood_ratio(r.center + 0.9 * r.radius) < p.threshold);
            assert!(p.likelihood_ratio(r.center + 1.1 * r.radius) > p.threshold);
        }
    }

    #[test]
    fn closed_forms_at_reference_points() {
        let m = paper_model();
        let sd1 = (5.0f64 / 3.0).sqrt();
        let g = GaussianShewhart::new(&m, 100.0).unwrap();
        let (nu1, nu2) = (g.nu(Variant::S1), g.nu(Variant::S2));
        let beta1 = norm_cdf((2.5 - nu1) / sd1) + norm_cdf(-(2.5 + nu1) / sd1);
        assert!((g.beta1() - beta1).abs() < 1e-14);
        assert!((g.beta1() - 0.1521).abs() < 1e-3);
        let k = (0.75f64).sqrt() / (0.75f64 + 0.5).sqrt();
        let beta2_tilde = norm_cdf((1.0 - nu2) * k) + norm_cdf(-(nu2 + 1.0) * k);
        assert!((g.beta2_tilde() - beta2_tilde).abs() < 1e-14);
        assert!((g.beta2_tilde() - 0.1139).abs() < 1e-3);
        assert!((g.beta2() - 2.0 * norm_cdf(-nu2 / 1.5f64.sqrt())).abs() < 1e-14);
        assert!((g.beta2() - 0.0355).abs() < 1e-3);
        assert!((g.beta1_tilde() - 2.0 * norm_cdf(-nu1 / 1.5f64.sqrt())).abs() < 1e-14);
        assert!((g.beta1_tilde() - 0.00178).abs() < 1e-4);
        assert!((g.worst_state(Variant::S1).unwrap() + 4.0).abs() < 1e-12);

        let g = GaussianShewhart::new(&m, 1000.0).unwrap();
        assert!((g.beta2() - 0.00722).abs() < 1e-4);
        assert!((g.beta1() - 0.0527).abs() < 1e-3);
        assert!((g.beta1_tilde() - 0.000176).abs() < 1e-5);
    }

    #[test]
    fn per_state_detection_shape() {
        let g = GaussianShewhart::new(&paper_model(), 1000.0).unwrap();
        let nu2 = g.nu(Variant::S2);
        let at_zero = norm_cdf((-nu2 + 0.5) / 1.5f64.sqrt()) + norm_cdf((-nu2 - 0.5) / 1.5f64.sqrt());
        assert!((g.per_state_detection(Variant::S2, 0.0) - at_zero).abs() < 1e-15);
        assert!((at_zero - 0.012334).abs() < 1e-6);
        assert!((g.per_state_detection(Variant::S2, -1.0) - 0.00722).abs() < 1e-4);
        for d in [0.5, 1.0, 2.0] {
            let a = g.per_state_detection(Variant::S2, -1.0 + d);
            let b = g.per_state_detection(Variant::S2, -1.0 - d);
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn equalizer_on_grid() {
        let g = GaussianShewhart::new(&paper_model(), 100.0).unwrap();
        let z = g.prior.support[0];
        assert!(g.prior.equalization_residual <= 1e-9);
        for i in 0..=200 {
            let zp = z - 10.0 + 0.1 * i as f64;
            assert!(g.per_state_detection(Variant::S2, zp) >= g.beta2() - 1e-9);
        }
    }

    #[test]
    fn negative_alpha_and_zero_mean() {
        let m = make_gaussian_ar1(GaussianAr1Params {
            alpha: -0.5,
            mu: 1.0,
            sigma2: 0.5,
        })
        .unwrap();
        let g = GaussianShewhart::new(&m, 100.0).unwrap();
        assert_eq!(g.prior.support, vec![3.0]);
        let (zq, dq) = worst_detection_quadrature(&m, g.region(Variant::S2));
        assert!((zq - 3.0).abs() < 1e-4 && (dq - g.beta2()).abs() < 1e-9);

        let m = make_gaussian_ar1(GaussianAr1Params {
            alpha: 0.5,
            mu: 0.0,
            sigma2: 0.5,
        })
        .unwrap();
        let g = GaussianShewhart::new(&m, 100.0).unwrap();
        assert_eq!(g.prior.support, vec![0.0]);
        let (r1, r2) = (g.region(Variant::S1), g.region(Variant::S2));
        assert!(r1.center.abs() < 1e-15 && r2.center.abs() < 1e-15);
        assert!((r1.radius - r2.radius).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_is_degenerate() {
        let m = make_gaussian_ar1(GaussianAr1Params {
            alpha: 0.0,
            mu: 1.0,
            sigma2: 0.5,
        })
        .unwrap();
        let g = GaussianShewhart::new(&m, 100.0).unwrap();
        assert!(g.prior.degenerate);
        assert!((g.beta2() - g.beta1()).abs() < 1e-14);
        assert!((g.beta1_tilde() - g.beta1()).abs() < 1e-14);
        assert_eq!(g.region(Variant::S1), g.region(Variant::S2));
    }

    #[test]
    fn ordering_across_gamma() {
        let m = paper_model();
        for gamma in [2.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0] {
            let q = GaussianShewhart::new(&m, gamma).unwrap().quantities();
            assert!(q.beta1 >= q.beta2_tilde, "{q:?}");
            assert!(q.beta2_tilde >= q.beta2, "{q:?}");
            assert!(q.beta2 >= q.beta1_tilde, "{q:?}");
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_forms() {
        let m = paper_model();
        for gamma in [10.0, 100.0] {
            let g = GaussianShewhart::new(&m, gamma).unwrap();
            let a = g.quantities();
            let b = g.quantities_by_quadrature();
            for (x, y) in [
                (a.beta1, b.beta1),
                (a.beta2, b.beta2),
                (a.beta1_tilde, b.beta1_tilde),
                (a.beta2_tilde, b.beta2_tilde),
            ] {
                assert!((x - y).abs() < 1e-8, "{a:?} vs {b:?}");
            }
            for x in [-3.0, -1.0, 0.0, 0.5, 2.0, 3.0] {
                assert!((g.density1.pdf(x) - averaged_density_1_quadrature(&m, x)).abs() < 1e-8);
                assert!((g.density2.pdf(x) - averaged_density_2_quadrature(&m, -1.0, x)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn band_bias_is_small_and_symmetric() {
        let g = GaussianShewhart::new(&paper_model(), 100.0).unwrap();
        let b = g.band_bias_bound(Variant::S2, 0.01);
        assert!(b > 0.0 && b < 1e-5, "{b}");
        let z = -1.0;
        let d = g.per_state_detection(Variant::S2, z + 0.01) - g.beta2();
        assert!((d - b).abs() < 1e-15);
    }
}
