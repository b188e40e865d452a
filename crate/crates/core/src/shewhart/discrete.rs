//! Shewhart tests on finite models.
//!
//! The worst-case prior is the dual of a small linear program: over one-step
//! stop probabilities `s` with nominal alarm rate `1/γ`, maximize the smallest
//! per-state detection probability `h_z·s`. A basic optimum fixes every `s_x`
//! at 0 or 1 except on a set `F` of boundary atoms, and is tight on a set `A`
//! of states with `|A| = |F|`. Any `(A, F)` whose primal and dual solutions
//! pass the optimality conditions is exact.

use std::sync::Arc;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_gamma, CalibrationResult, ShewhartError, ShewhartPolicy,
    Variant, WorstCasePrior, TIE_TOLERANCE,
};
use crate::model::DiscreteHmm;
use crate::numerics::solve_linear;

pub const MWU_STEP: f64 = 0.5;
pub const MWU_PRUNE: f64 = 1e-12;
pub const MWU_ITERATION_CAP: usize = 10_000;
/// Equalization target for the iterative solver.
pub const EQUALIZATION_TOLERANCE: f64 = 1e-9;
const KKT_TOLERANCE: f64 = 1e-11;
const POLISH_EVERY: usize = 10;

/// `f̄₀¹(ξ) = Σ_{z'} g∞(z') Σ_z f₀(ξ|z) g₀(z|z')`.
pub fn averaged_density_1_discrete(hmm: &DiscreteHmm) -> Vec<f64> {
    averaged_density_2_discrete(hmm, &hmm.model().stationary)
}

/// `f̄₀²(ξ) = Σ_{z'} π(z') Σ_z f₀(ξ|z) g₀(z|z')` for a prior over all states.
pub fn averaged_density_2_discrete(hmm: &DiscreteHmm, prior: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; hmm.obs_count()];
    for (zp, &w) in prior.iter().enumerate() {
        if w != 0.0 {
            for (o, c) in out.iter_mut().zip(hmm.post_conditional_obs(zp)) {
                *o += w * c;
            }
        }
    }
    out
}

/// `L(ξ) = f̄(ξ)/f∞(ξ)`, infinite where only the post-change law puts mass.
pub fn likelihood_ratios(density: &[f64], pre_obs: &[f64]) -> Vec<f64> {
    density
        .iter()
        .zip(pre_obs)
        .map(|(&d, &p)| match (p > 0.0, d > 0.0) {
            (true, _) => d / p,
            (false, true) => f64::INFINITY,
            (false, false) => 0.0,
        })
        .collect()
}

fn same_ratio(a: f64, b: f64) -> bool {
    a == b || (a.is_finite() && b.is_finite() && (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()))
}

fn alarm_residual(rate: f64, gamma: f64) -> f64 {
    (1.0 - gamma * rate).abs() / (gamma * rate)
}

/// Sorts atoms by likelihood ratio, stops surely above the boundary group,
/// and splits the remaining alarm mass on the boundary group with `q`.
/// Returns the calibration and the per-atom stop probabilities.
pub fn calibrate_discrete(
    lr: &[f64],
    pre_obs: &[f64],
    gamma: f64,
) -> Result<(CalibrationResult, Vec<f64>), ShewhartError> {
    check_gamma(gamma)?;
    let target = 1.0 / gamma;
    let order: Vec<usize> = (0..lr.len())
        .sorted_by(|&a, &b| lr[b].total_cmp(&lr[a]))
        .collect();
    let mut stop = vec![0.0; lr.len()];
    let mut cum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let level = lr[order[i]];
        if level <= 0.0 {
            break;
        }
        let group: Vec<usize> = order[i..]
            .iter()
            .copied()
            .take_while(|&x| same_ratio(lr[x], level))
            .collect();
        i += group.len();
        let mass: f64 = group.iter().map(|&x| pre_obs[x]).sum();
        if cum + mass >= target && mass > 0.0 {
            let q = ((target - cum) / mass).clamp(0.0, 1.0);
            for &x in &group {
                stop[x] = q;
            }
            let rate = cum + q * mass;
            let cal = CalibrationResult {
                gamma,
                threshold: level,
                randomization: q,
                residual: alarm_residual(rate, gamma),
                observation_form: None,
            };
            return Ok((cal, stop));
        }
        cum += mass;
        for &x in &group {
            stop[x] = 1.0;
        }
    }
    Err(ShewhartError::Unreachable {
        target,
        available: cum,
    })
}

/// `P₀(alarm at τ+1 | z_τ = z_prev)` for per-atom stop probabilities.
pub fn per_state_detection_discrete(hmm: &DiscreteHmm, stop: &[f64], z_prev: usize) -> f64 {
    dot(hmm.post_conditional_obs(z_prev), stop)
}

/// `Σ_ξ f̄₀¹(ξ) s(ξ)`
pub fn beta1_discrete(hmm: &DiscreteHmm, stop: &[f64]) -> f64 {
    dot(&averaged_density_1_discrete(hmm), stop)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// States the adversary can actually act on.
fn admissible_states(hmm: &DiscreteHmm) -> Vec<usize> {
    (0..hmm.state_count())
        .filter(|&z| hmm.model().stationary[z] > 0.0)
        .collect()
}

/// Exact optimum of the prior LP.
#[derive(Debug, Clone, PartialEq)]
struct LpSolution {
    /// `(state, weight)` over the tight set.
    prior: Vec<(usize, f64)>,
    stop: Vec<f64>,
    beta: f64,
    lambda: f64,
}

struct PriorLp<'a> {
    hmm: &'a DiscreteHmm,
    pre_obs: &'a [f64],
    states: Vec<usize>,
    target: f64,
}

impl<'a> PriorLp<'a> {
    fn new(hmm: &'a DiscreteHmm, gamma: f64) -> Self {
        Self {
            hmm,
            pre_obs: &hmm.model().pre_obs,
            states: admissible_states(hmm),
            target: 1.0 / gamma,
        }
    }

    fn row(&self, z: usize) -> &[f64] {
        self.hmm.post_conditional_obs(z)
    }

    /// Atoms that can sit on the boundary.
    fn priced_atoms(&self) -> Vec<usize> {
        (0..self.pre_obs.len()).filter(|&x| self.pre_obs[x] > 0.0).collect()
    }

    /// Solves the dual then the primal for tight states `active` and boundary
    /// atoms `free`, and verifies optimality.
    fn try_basis(&self, active: &[usize], free: &[usize]) -> Option<LpSolution> {
        let k = active.len();
        debug_assert_eq!(k, free.len());
        let n = self.pre_obs.len();

        // Dual: Σ_{z∈A} π_z h_z[x] = λ p_x on F, Σ π = 1.
        let mut a = vec![vec![0.0; k + 1]; k + 1];
        let mut b = vec![0.0; k + 1];
        for (r, &x) in free.iter().enumerate() {
            for (c, &z) in active.iter().enumerate() {
                a[r][c] = self.row(z)[x];
            }
            a[r][k] = -self.pre_obs[x];
        }
        a[k][..k].fill(1.0);
        b[k] = 1.0;
        let dual = solve_linear(a, b)?;
        let (pi, lambda) = (&dual[..k], dual[k]);
        if pi.iter().any(|&w| w < -KKT_TOLERANCE) || !(lambda > 0.0) {
            return None;
        }

        // Complementary slackness fixes every atom off the boundary.
        let mut stop = vec![0.0; n];
        for x in 0..n {
            if free.contains(&x) {
                continue;
            }
            let w: f64 = active.iter().zip(pi).map(|(&z, &p)| p * self.row(z)[x]).sum();
            let gap = w - lambda * self.pre_obs[x];
            if self.pre_obs[x] == 0.0 {
                stop[x] = 1.0;
            } else if gap.abs() <= KKT_TOLERANCE {
                return None;
            } else {
                stop[x] = if gap > 0.0 { 1.0 } else { 0.0 };
            }
        }

        // Primal: h_z·s = β on A, Σ p s = 1/γ.
        let mut a = vec![vec![0.0; k + 1]; k + 1];
        let mut b = vec![0.0; k + 1];
        for (r, &z) in active.iter().enumerate() {
            let h = self.row(z);
            for (c, &x) in free.iter().enumerate() {
                a[r][c] = h[x];
            }
            a[r][k] = -1.0;
            b[r] = -dot(h, &stop);
        }
        for (c, &x) in free.iter().enumerate() {
            a[k][c] = self.pre_obs[x];
        }
        b[k] = self.target - dot(self.pre_obs, &stop);
        let primal = solve_linear(a, b)?;
        for (&x, &s) in free.iter().zip(&primal[..k]) {
            if !(-KKT_TOLERANCE..=1.0 + KKT_TOLERANCE).contains(&s) {
                return None;
            }
            stop[x] = s.clamp(0.0, 1.0);
        }
        let beta = primal[k];
        if self
            .states
            .iter()
            .any(|&z| dot(self.row(z), &stop) < beta - KKT_TOLERANCE)
        {
            return None;
        }
        let prior = active
            .iter()
            .zip(pi)
            .map(|(&z, &w)| (z, w.max(0.0)))
            .collect();
        Some(LpSolution {
            prior,
            stop,
            beta,
            lambda,
        })
    }

    /// Tries bases whose tight states come from the lowest-detection and
    /// heaviest states, and whose boundary atoms are those nearest the
    /// current threshold.
    fn polish(
        &self,
        weights: &[f64],
        detection: &[f64],
        lr: &[f64],
        threshold: f64,
    ) -> Option<LpSolution> {
        let by_detection: Vec<usize> = (0..self.states.len())
            .sorted_by(|&a, &b| detection[a].total_cmp(&detection[b]))
            .collect();
        let by_weight: Vec<usize> = (0..self.states.len())
            .sorted_by(|&a, &b| weights[b].total_cmp(&weights[a]))
            .collect();
        let ln_nu = threshold.ln();
        let ranked_atoms: Vec<usize> = self
            .priced_atoms()
            .into_iter()
            .sorted_by(|&a, &b| (lr[a].ln() - ln_nu).abs().total_cmp(&(lr[b].ln() - ln_nu).abs()))
            .collect();
        let kmax = self.states.len().min(ranked_atoms.len());
        for k in 1..=kmax {
            let state_pool: Vec<usize> = by_detection[..(k + 2).min(by_detection.len())]
                .iter()
                .chain(&by_weight[..k])
                .copied()
                .unique()
                .sorted()
                .map(|i| self.states[i])
                .collect();
            let atom_pool = &ranked_atoms[..(k + 2).min(ranked_atoms.len())];
            for active in state_pool.iter().copied().combinations(k) {
                for free in atom_pool.iter().copied().combinations(k) {
                    if let Some(sol) = self.try_basis(&active, &free) {
                        return Some(sol);
                    }
                }
            }
        }
        None
    }
}

fn prior_from_solution(
    hmm: &DiscreteHmm,
    sol: &LpSolution,
) -> WorstCasePrior<usize> {
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for &(z, w) in sol.prior.iter().sorted_by_key(|(z, _)| *z) {
        if w > MWU_PRUNE {
            support.push(z);
            weights.push(w);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let equalization_residual = support
        .iter()
        .map(|&z| (per_state_detection_discrete(hmm, &sol.stop, z) - sol.beta).abs())
        .fold(0.0, f64::max);
    WorstCasePrior {
        support,
        weights,
        beta2: sol.beta,
        equalization_residual,
        degenerate: false,
    }
}

fn calibration_from_solution(hmm: &DiscreteHmm, sol: &LpSolution, gamma: f64) -> CalibrationResult {
    let pre = &hmm.model().pre_obs;
    let density = full_prior_density(hmm, &sol.prior);
    let lr = likelihood_ratios(&density, pre);
    let (mut on, mut mass) = (0.0, 0.0);
    for x in 0..pre.len() {
        if same_ratio(lr[x], sol.lambda) {
            on += pre[x] * sol.stop[x];
            mass += pre[x];
        }
    }
    let rate = dot(pre, &sol.stop);
    CalibrationResult {
        gamma,
        threshold: sol.lambda,
        randomization: if mass > 0.0 { on / mass } else { 0.0 },
        residual: alarm_residual(rate, gamma),
        observation_form: None,
    }
}

fn full_prior_density(hmm: &DiscreteHmm, prior: &[(usize, f64)]) -> Vec<f64> {
    let mut full = vec![0.0; hmm.state_count()];
    for &(z, w) in prior {
        full[z] += w;
    }
    averaged_density_2_discrete(hmm, &full)
}

/// Outcome of a worst-case prior solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSolution {
    pub prior: WorstCasePrior<usize>,
    pub calibration: CalibrationResult,
    /// Per-atom stop probabilities of the variant-2 test.
    pub stop: Vec<f64>,
    pub iterations: usize,
}

fn degenerate_solution(hmm: &DiscreteHmm, gamma: f64) -> Result<PriorSolution, ShewhartError> {
    let pre = &hmm.model().pre_obs;
    let density = averaged_density_1_discrete(hmm);
    let (calibration, stop) = calibrate_discrete(&likelihood_ratios(&density, pre), pre, gamma)?;
    let support = admissible_states(hmm);
    let weights = support.iter().map(|&z| hmm.model().stationary[z]).collect();
    let beta2 = per_state_detection_discrete(hmm, &stop, support[0]);
    Ok(PriorSolution {
        prior: WorstCasePrior {
            support,
            weights,
            beta2,
            equalization_residual: 0.0,
            degenerate: true,
        },
        calibration,
        stop,
        iterations: 0,
    })
}

/// Fixed-point solver: calibrate the test for the current prior, score every
/// state by its detection probability, and shift prior mass toward the worst
/// states by a multiplicative-weights step. Every few steps the current
/// ranking seeds an exact basis solve, which ends the iteration once it
/// passes the optimality check.
pub fn solve_worst_case_prior_discrete(
    hmm: &DiscreteHmm,
    gamma: f64,
) -> Result<PriorSolution, ShewhartError> {
    check_gamma(gamma)?;
    if hmm.has_flat_conditionals() {
        return degenerate_solution(hmm, gamma);
    }
    let lp = PriorLp::new(hmm, gamma);
    let pre = lp.pre_obs;
    let stationary = &hmm.model().stationary;
    let mut weights: Vec<f64> = lp.states.iter().map(|&z| stationary[z]).collect();
    let mut residuals = Vec::new();
    for it in 0..MWU_ITERATION_CAP {
        let prior: Vec<(usize, f64)> = lp.states.iter().copied().zip(weights.iter().copied()).collect();
        let density = full_prior_density(hmm, &prior);
        let lr = likelihood_ratios(&density, pre);
        let (cal, stop) = calibrate_discrete(&lr, pre, gamma)?;
        let detection: Vec<f64> = lp
            .states
            .iter()
            .map(|&z| per_state_detection_discrete(hmm, &stop, z))
            .collect();
        let lo = detection.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = detection.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let average = dot(&weights, &detection);
        residuals.push(average - lo);

        if it % POLISH_EVERY == 0 {
            if let Some(sol) = lp.polish(&weights, &detection, &lr, cal.threshold) {
                return Ok(PriorSolution {
                    prior: prior_from_solution(hmm, &sol),
                    calibration: calibration_from_solution(hmm, &sol, gamma),
                    stop: sol.stop,
                    iterations: it + 1,
                });
            }
        }
        let spread = hi - lo;
        if spread <= 0.0 {
            break;
        }
        for (w, d) in weights.iter_mut().zip(&detection) {
            *w *= (-MWU_STEP * (d - lo) / spread).exp();
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
            if *w < MWU_PRUNE {
                *w = 0.0;
            }
        }
    }
    Err(ShewhartError::NoConvergence {
        iterations: residuals.len(),
        residuals,
    })
}

/// Oracle: tries every pair of tight-state set and boundary-atom set of equal
/// size and keeps the bases that pass the optimality check.
pub fn worst_case_prior_by_enumeration(
    hmm: &DiscreteHmm,
    gamma: f64,
) -> Result<PriorSolution, ShewhartError> {
    check_gamma(gamma)?;
    if hmm.has_flat_conditionals() {
        return degenerate_solution(hmm, gamma);
    }
    let lp = PriorLp::new(hmm, gamma);
    let atoms = lp.priced_atoms();
    let mut found: Vec<LpSolution> = Vec::new();
    for k in 1..=lp.states.len().min(atoms.len()) {
        for active in lp.states.iter().copied().combinations(k) {
            for free in atoms.iter().copied().combinations(k) {
                if let Some(sol) = lp.try_basis(&active, &free) {
                    found.push(sol);
                }
            }
        }
    }
    let best = found
        .into_iter()
        .min_by(|a, b| {
            let support = |s: &LpSolution| s.prior.iter().filter(|(_, w)| *w > MWU_PRUNE).count();
            support(a).cmp(&support(b))
        })
        .ok_or(ShewhartError::NoSupport)?;
    Ok(PriorSolution {
        prior: prior_from_solution(hmm, &best),
        calibration: calibration_from_solution(hmm, &best, gamma),
        stop: best.stop,
        iterations: 0,
    })
}

/// Every vertex of `{0 <= s <= 1, Σ f∞ s = 1/γ}`: each subset of atoms
/// stopped surely plus at most one randomized atom. Zero-mass atoms always
/// stop since they cost nothing.
pub fn one_step_competitors(pre_obs: &[f64], gamma: f64) -> Result<Vec<Vec<f64>>, ShewhartError> {
    check_gamma(gamma)?;
    let target = 1.0 / gamma;
    let priced: Vec<usize> = (0..pre_obs.len()).filter(|&x| pre_obs[x] > 0.0).collect();
    assert!(priced.len() <= 20, "competitor enumeration is exponential in the alphabet");
    let base: Vec<f64> = pre_obs.iter().map(|&p| if p > 0.0 { 0.0 } else { 1.0 }).collect();
    let mut out = Vec::new();
    for mask in 0u32..(1 << priced.len()) {
        let mut s = base.clone();
        let mut mass = 0.0;
        for (bit, &x) in priced.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                s[x] = 1.0;
                mass += pre_obs[x];
            }
        }
        if (mass - target).abs() <= 1e-15 {
            out.push(s.clone());
        }
        if mass >= target {
            continue;
        }
        for (bit, &x) in priced.iter().enumerate() {
            if mask >> bit & 1 == 0 && mass + pre_obs[x] > target {
                let mut t = s.clone();
                t[x] = (target - mass) / pre_obs[x];
                out.push(t);
            }
        }
    }
    Ok(out)
}

/// Largest alphabet for which [`competitor_family`] enumerates every vertex.
pub const EXACT_COMPETITOR_ATOMS: usize = 12;

/// Random vertices of the same polytope: visit atoms in a random order and
/// stop each one surely until the next would overshoot `1/γ`, which is then
/// randomized to hit it exactly.
pub fn sampled_competitors(pre_obs: &[f64], gamma: f64, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, ShewhartError> {
    check_gamma(gamma)?;
    let target = 1.0 / gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pre_obs.len()).filter(|&x| pre_obs[x] > 0.0).collect();
    let base: Vec<f64> = pre_obs.iter().map(|&p| if p > 0.0 { 0.0 } else { 1.0 }).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        order.shuffle(&mut rng);
        let mut s = base.clone();
        let mut mass = 0.0;
        for &x in &order {
            if mass + pre_obs[x] <= target {
                s[x] = 1.0;
                mass += pre_obs[x];
            } else {
                s[x] = (target - mass) / pre_obs[x];
                break;
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// Every vertex for small alphabets, a seeded sample of vertices otherwise.
pub fn competitor_family(pre_obs: &[f64], gamma: f64, seed: u64) -> Result<Vec<Vec<f64>>, ShewhartError> {
    if pre_obs.iter().filter(|&&p| p > 0.0).count() <= EXACT_COMPETITOR_ATOMS {
        one_step_competitors(pre_obs, gamma)
    } else {
        sampled_competitors(pre_obs, gamma, 4096, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMethod {
    FixedPoint,
    Enumeration,
}

/// Both calibrated tests for one finite model and `γ`.
#[derive(Debug, Clone)]
pub struct DiscreteShewhart {
    hmm: DiscreteHmm,
    pub gamma: f64,
    pub density1: Vec<f64>,
    pub density2: Vec<f64>,
    pub lr1: Vec<f64>,
    pub lr2: Vec<f64>,
    pub calibration1: CalibrationResult,
    pub calibration2: CalibrationResult,
    pub stop1: Vec<f64>,
    pub stop2: Vec<f64>,
    pub prior: WorstCasePrior<usize>,
    pub iterations: usize,
}

pub fn shewhart_discrete(hmm: &DiscreteHmm, gamma: f64) -> Result<DiscreteShewhart, ShewhartError> {
    DiscreteShewhart::new(hmm, gamma, PriorMethod::FixedPoint)
}

impl DiscreteShewhart {
    pub fn new(hmm: &DiscreteHmm, gamma: f64, method: PriorMethod) -> Result<Self, ShewhartError> {
        let pre = &hmm.model().pre_obs;
        let density1 = averaged_density_1_discrete(hmm);
        let lr1 = likelihood_ratios(&density1, pre);
        let (calibration1, stop1) = calibrate_discrete(&lr1, pre, gamma)?;
        let sol = match method {
            PriorMethod::FixedPoint => solve_worst_case_prior_discrete(hmm, gamma)?,
            PriorMethod::Enumeration => worst_case_prior_by_enumeration(hmm, gamma)?,
        };
        let mut full = vec![0.0; hmm.state_count()];
        for (&z, &w) in sol.prior.support.iter().zip(&sol.prior.weights) {
            full[z] = w;
        }
        let density2 = averaged_density_2_discrete(hmm, &full);
        let lr2 = likelihood_ratios(&density2, pre);
        Ok(Self {
            hmm: hmm.clone(),
            gamma,
            density1,
            density2,
            lr1,
            lr2,
            calibration1,
            calibration2: sol.calibration,
            stop1,
            stop2: sol.stop,
            prior: sol.prior,
            iterations: sol.iterations,
        })
    }

    pub fn hmm(&self) -> &DiscreteHmm {
        &self.hmm
    }

    pub fn stop(&self, variant: Variant) -> &[f64] {
        match variant {
            Variant::S1 => &self.stop1,
            Variant::S2 => &self.stop2,
        }
    }

    pub fn policy(&self, variant: Variant) -> ShewhartPolicy<usize> {
        let (density, lr, cal) = match variant {
            Variant::S1 => (&self.density1, &self.lr1, &self.calibration1),
            Variant::S2 => (&self.density2, &self.lr2, &self.calibration2),
        };
        let density = Arc::new(density.clone());
        let lr = Arc::new(lr.clone());
        let stop = Arc::new(self.stop(variant).to_vec());
        ShewhartPolicy::new(
            variant,
            cal,
            Arc::new(move |x: usize| lr[x]),
            Arc::new(move |x: usize| density[x]),
            Arc::new(move |x: usize| stop[x]),
        )
    }

    pub fn per_state_detection(&self, variant: Variant, z_prev: usize) -> f64 {
        per_state_detection_discrete(&self.hmm, self.stop(variant), z_prev)
    }

    /// Smallest per-state detection over states the adversary can reach.
    pub fn worst_state_detection(&self, variant: Variant) -> f64 {
        admissible_states(&self.hmm)
            .into_iter()
            .map(|z| self.per_state_detection(variant, z))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn beta1(&self) -> f64 {
        dot(&self.density1, &self.stop1)
    }

    pub fn beta2(&self) -> f64 {
        self.prior.beta2
    }

    pub fn beta1_tilde(&self) -> f64 {
        self.worst_state_detection(Variant::S1)
    }

    pub fn beta2_tilde(&self) -> f64 {
        dot(&self.density1, &self.stop2)
    }

    /// `P∞` one-step alarm rate of `variant`.
    pub fn nominal_alarm_rate(&self, variant: Variant) -> f64 {
        dot(&self.hmm.model().pre_obs, self.stop(variant))
    }
}
