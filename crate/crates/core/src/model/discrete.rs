//! Finite-state, finite-alphabet change models. Every integral is an exact sum,
//! which makes these models the oracle for the continuous code paths.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ChangeModel, ModelError, DISCRETE_CHECK_TOL};

/// Raw model document, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteModel {
    /// `f∞` over the observation alphabet.
    pub pre_obs: Vec<f64>,
    /// `f₀(ξ|z)`, one row per state.
    pub post_obs: Vec<Vec<f64>>,
    /// `g∞(z'|z)`, row `z`.
    pub pre_trans: Vec<Vec<f64>>,
    /// `g₀(z'|z)`, row `z`.
    pub post_trans: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
}

impl DiscreteModel {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn state_count(&self) -> usize {
        self.stationary.len()
    }

    pub fn obs_count(&self) -> usize {
        self.pre_obs.len()
    }
}

/// A validated finite model.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm {
    model: DiscreteModel,
    conditional_obs: Vec<Vec<f64>>,
    row_sum_residual: f64,
    stationarity_residual: f64,
}

fn check_vector(key: &'static str, row: Option<usize>, v: &[f64], len: usize) -> Result<f64, ModelError> {
    if v.len() != len {
        return Err(ModelError::Validation {
            key,
            row,
            reason: format!("expected {len} entries, found {}", v.len()),
        });
    }
    if let Some(bad) = v.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(ModelError::Validation {
            key,
            row,
            reason: format!("entries must be finite and nonnegative, found {bad}"),
        });
    }
    let residual = (v.iter().sum::<f64>() - 1.0).abs();
    if residual > DISCRETE_CHECK_TOL {
        return Err(ModelError::Validation {
            key,
            row,
            reason: format!("entries sum to 1 + {residual:e}"),
        });
    }
    Ok(residual)
}

fn check_matrix(key: &'static str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<f64, ModelError> {
    if m.len() != rows {
        return Err(ModelError::Validation {
            key,
            row: None,
            reason: format!("expected {rows} rows, found {}", m.len()),
        });
    }
    m.iter()
        .enumerate()
        .map(|(i, r)| check_vector(key, Some(i), r, cols))
        .try_fold(0.0_f64, |acc, r| r.map(|r| acc.max(r)))
}

pub fn make_discrete(model: DiscreteModel) -> Result<DiscreteHmm, ModelError> {
    let states = model.state_count();
    let symbols = model.obs_count();
    if states == 0 {
        return Err(ModelError::Validation {
            key: "stationary",
            row: None,
            reason: "at least one state is required".into(),
        });
    }
    if symbols == 0 {
        return Err(ModelError::Validation {
            key: "pre_obs",
            row: None,
            reason: "at least one observation symbol is required".into(),
        });
    }
    let mut residual = check_vector("pre_obs", None, &model.pre_obs, symbols)?;
    residual = residual.max(check_vector("stationary", None, &model.stationary, states)?);
    residual = residual.max(check_matrix("post_obs", &model.post_obs, states, symbols)?);
    residual = residual.max(check_matrix("pre_trans", &model.pre_trans, states, states)?);
    residual = residual.max(check_matrix("post_trans", &model.post_trans, states, states)?);

    let mut stationarity: f64 = 0.0;
    for to in 0..states {
        let pushed: f64 = (0..states)
            .map(|from| model.stationary[from] * model.pre_trans[from][to])
            .sum();
        let gap = (pushed - model.stationary[to]).abs();
        if gap > DISCRETE_CHECK_TOL {
            return Err(ModelError::Validation {
                key: "stationary",
                row: Some(to),
                reason: format!("not invariant under pre_trans (residual {gap:e})"),
            });
        }
        stationarity = stationarity.max(gap);
    }

    let conditional_obs = (0..states)
        .map(|prev| {
            (0..symbols)
                .map(|x| {
                    (0..states)
                        .map(|z| model.post_trans[prev][z] * model.post_obs[z][x])
                        .sum()
                })
                .collect()
        })
        .collect();

    Ok(DiscreteHmm {
        model,
        conditional_obs,
        row_sum_residual: residual,
        stationarity_residual: stationarity,
    })
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the last cumulative sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

impl DiscreteHmm {
    pub fn model(&self) -> &DiscreteModel {
        &self.model
    }

    pub fn state_count(&self) -> usize {
        self.model.state_count()
    }

    pub fn obs_count(&self) -> usize {
        self.model.obs_count()
    }

    /// `f₀(ξ|z_{t-1}) = Σ_z f₀(ξ|z) g₀(z|z_{t-1})` for every symbol.
    pub fn post_conditional_obs(&self, z_prev: usize) -> &[f64] {
        &self.conditional_obs[z_prev]
    }

    /// Whether every conditional observation law is the same, in which case
    /// the previous state carries no information about the next symbol.
    pub fn has_flat_conditionals(&self) -> bool {
        let first = &self.conditional_obs[0];
        self.conditional_obs
            .iter()
            .all(|row| row.iter().zip(first).all(|(a, b)| (a - b).abs() <= 1e-15))
    }
}

impl ChangeModel for DiscreteHmm {
    type State = usize;
    type Obs = usize;

    fn pre_obs_density(&self, x: usize) -> f64 {
        self.model.pre_obs[x]
    }

    fn post_obs_density(&self, x: usize, z: usize) -> f64 {
        self.model.post_obs[z][x]
    }

    fn pre_transition(&self, to: usize, from: usize) -> f64 {
        self.model.pre_trans[from][to]
    }

    fn post_transition(&self, to: usize, from: usize) -> f64 {
        self.model.post_trans[from][to]
    }

    fn stationary_density(&self, z: usize) -> f64 {
        self.model.stationary[z]
    }

    fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.model.stationary, rng)
    }

    fn sample_pre_transition<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        sample_index(&self.model.pre_trans[from], rng)
    }

    fn sample_post_transition<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        sample_index(&self.model.post_trans[from], rng)
    }

    fn sample_pre_obs<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.model.pre_obs, rng)
    }

    fn sample_post_obs<R: Rng + ?Sized>(&self, z: usize, rng: &mut R) -> usize {
        sample_index(&self.model.post_obs[z], rng)
    }

    fn sample_stationary_near<R: Rng + ?Sized>(
        &self,
        target: usize,
        _band: f64,
        _rng: &mut R,
    ) -> Option<usize> {
        (target < self.state_count() && self.model.stationary[target] > 0.0).then_some(target)
    }

    fn state_distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn normalization_residual(&self) -> f64 {
        self.row_sum_residual
    }

    fn stationarity_residual(&self) -> f64 {
        self.stationarity_residual
    }
}

/// Random model with entries bounded away from zero; the stationary vector
/// is found by power iteration. Used to build test corpora.
pub fn random_discrete_model(states: usize, symbols: usize, seed: u64) -> DiscreteModel {
    let mut rng = crate::numerics::rng_stream(seed, 99);
    let mut row = |n: usize| {
        let v: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let pre_obs = row(symbols);
    let post_obs = (0..states).map(|_| row(symbols)).collect();
    let pre_trans: Vec<Vec<f64>> = (0..states).map(|_| row(states)).collect();
    let post_trans = (0..states).map(|_| row(states)).collect();
    let mut pi = vec![1.0 / states as f64; states];
    for _ in 0..10_000 {
        let next: Vec<f64> = (0..states)
            .map(|j| (0..states).map(|i| pi[i] * pre_trans[i][j]).sum())
            .collect();
        let delta = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if delta < 1e-17 {
            break;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    DiscreteModel {
        pre_obs,
        post_obs,
        pre_trans,
        post_trans,
        stationary: pi,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::numerics::rng_stream;

    fn symmetric(stationary: Vec<f64>) -> DiscreteModel {
        DiscreteModel {
            pre_obs: vec![0.5, 0.5],
            post_obs: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            pre_trans: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            post_trans: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            stationary,
        }
    }

    #[test]
    fn symmetric_chain_accepted_and_wrong_stationary_rejected() {
        assert!(make_discrete(symmetric(vec![0.5, 0.5])).is_ok());
        let err = make_discrete(symmetric(vec![0.6, 0.4])).unwrap_err();
        assert!(matches!(err, ModelError::Validation { key: "stationary", row: Some(_), .. }));
    }

    #[test]
    fn power_iteration_model_accepted() {
        let hmm = make_discrete(random_discrete_model(3, 4, 1)).unwrap();
        assert!(hmm.stationarity_residual() < 1e-12);
        assert!(hmm.normalization_residual() < 1e-12);
    }

    #[test]
    fn validation_names_key_and_row() {
        let mut m = symmetric(vec![0.5, 0.5]);
        m.post_obs[1] = vec![0.5, 0.6];
        let err = make_discrete(m).unwrap_err();
        assert_eq!(
            err,
            ModelError::Validation {
                key: "post_obs",
                row: Some(1),
                reason: err_reason(&err)
            }
        );
        assert!(err.to_string().contains("post_obs"));
        assert!(err.to_string().contains("row 1"));

        let mut m = symmetric(vec![0.5, 0.5]);
        m.pre_trans[0] = vec![1.1, -0.1];
        assert!(matches!(
            make_discrete(m).unwrap_err(),
            ModelError::Validation { key: "pre_trans", row: Some(0), .. }
        ));

        let mut m = symmetric(vec![0.5, 0.5]);
        m.post_trans.pop();
        assert!(matches!(
            make_discrete(m).unwrap_err(),
            ModelError::Validation { key: "post_trans", row: None, .. }
        ));
    }

    fn err_reason(e: &ModelError) -> String {
        match e {
            ModelError::Validation { reason, .. } => reason.clone(),
            _ => String::new(),
        }
    }

    #[test]
    fn json_roundtrip_and_unknown_keys() {
        let m = random_discrete_model(2, 3, 5);
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(DiscreteModel::from_json(&text).unwrap(), m);
        let bad = r#"{"pre_obs":[1.0],"post_obs":[[1.0]],"pre_trans":[[1.0]],"post_trans":[[1.0]],"stationary":[1.0],"extra":1}"#;
        assert!(matches!(DiscreteModel::from_json(bad), Err(ModelError::Parse(_))));
        let missing = r#"{"pre_obs":[1.0]}"#;
        assert!(DiscreteModel::from_json(missing).unwrap_err().to_string().contains("post_obs"));
    }

    #[test]
    fn conditional_obs_is_exact_sum() {
        let hmm = make_discrete(random_discrete_model(3, 4, 2)).unwrap();
        let m = hmm.model();
        for prev in 0..3 {
            let row = hmm.post_conditional_obs(prev);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for x in 0..4 {
                let mut brute = 0.0;
                for z in 0..3 {
                    brute += m.post_obs[z][x] * m.post_trans[prev][z];
                }
                assert!((row[x] - brute).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sampling_frequencies() {
        let hmm = make_discrete(random_discrete_model(2, 3, 3)).unwrap();
        let mut rng = rng_stream(4, 0);
        let n = 200_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[hmm.sample_pre_obs(&mut rng)] += 1;
        }
        for (x, &c) in counts.iter().enumerate() {
            let p = hmm.model().pre_obs[x];
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() < 4.0 * se);
        }
    }
}
