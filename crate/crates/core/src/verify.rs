//! The default verification corpus: exact game enumeration, the criteria
//! ordering, solver-versus-oracle agreement, competitor bounds, family bounds
//! and the equalizer property with its negative control.

use serde::Serialize;
use serde_json::{json, Value};

use crate::adversary::equalizer_check;
use crate::adversary::game::{
    criteria_bridge, lemma1_enumerate, random_game, FiniteGame, GameDetector, Mode, Reward, WEncoding,
};
use crate::figure::FIGURE_PARAMS;
use crate::model::{make_discrete, make_gaussian_ar1, random_discrete_model, DiscreteModel};
use crate::montecarlo::RunConfig;
use crate::shewhart::rules::ParityShewhart;
use crate::shewhart::theorems::{discrete_optimality_check, theorem2_discrete, theorem2_gaussian};
use crate::shewhart::{
    solve_worst_case_prior_discrete, worst_case_prior_by_enumeration, DiscreteShewhart, GaussianShewhart, PriorMethod,
    Variant,
};

/// Randomized games per reward mode.
pub const GAME_CORPUS: u64 = 24;
pub const EQUALIZER_TIMES: [u64; 5] = [0, 1, 2, 5, 10];
const K: f64 = 3.0;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// The check is a negative control and passes when its condition fails.
    pub expect_fail: bool,
    pub passed: bool,
    pub detail: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub gamma: f64,
    pub run: RunConfig,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

fn check(name: &str, passed: bool, detail: Value) -> Check {
    Check {
        name: name.into(),
        expect_fail: false,
        passed,
        detail,
    }
}

fn failure(name: &str, e: impl std::fmt::Display) -> Check {
    check(name, false, json!({ "error": e.to_string() }))
}

fn binary_first_hit_game(reward: Reward) -> FiniteGame {
    let hmm = make_discrete(DiscreteModel {
        pre_obs: vec![0.7, 0.3],
        post_obs: vec![vec![0.4, 0.6], vec![0.1, 0.9]],
        pre_trans: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        post_trans: vec![vec![0.5, 0.5], vec![0.2, 0.8]],
        stationary: vec![0.6, 0.4],
    })
    .expect("fixed model is valid");
    FiniteGame {
        hmm,
        w: WEncoding::Observations,
        reward,
        horizon: 3,
        detector: GameDetector::first_hit(1),
    }
}

/// Antichain exactness over the randomized corpus in one mode.
pub fn lemma1_corpus(seed: u64, reward: Reward, mode: Mode) -> Check {
    let name = format!("antichain exactness {mode:?} {reward:?}").to_lowercase();
    let mut games = vec![binary_first_hit_game(reward)];
    games.extend((0..GAME_CORPUS).map(|i| random_game(seed.wrapping_add(i), reward)));
    let mut worst_gap: f64 = 0.0;
    let mut stopping_times = 0u64;
    for g in &games {
        match lemma1_enumerate(g, mode) {
            Ok(r) => {
                if !r.holds() {
                    return check(&name, false, json!({ "failing": r }));
                }
                worst_gap = worst_gap.max(r.gap());
                stopping_times += r.stopping_times;
            }
            Err(e) => return failure(&name, e),
        }
    }
    check(
        &name,
        true,
        json!({ "games": games.len(), "max_gap": worst_gap, "stopping_times": stopping_times }),
    )
}

fn criteria_check(seed: u64, gamma: f64) -> Check {
    let name = "criteria bridge";
    let mut rows = Vec::new();
    let mut ok = true;
    for i in 0..5 {
        let hmm = match make_discrete(random_discrete_model(3, 3, seed.wrapping_add(1000 + i))) {
            Ok(h) => h,
            Err(e) => return failure(name, e),
        };
        let s = match DiscreteShewhart::new(&hmm, gamma, PriorMethod::FixedPoint) {
            Ok(s) => s,
            Err(e) => return failure(name, e),
        };
        let law = [0.5, 0.5];
        let values = |v: Variant| criteria_bridge(&hmm, &GameDetector::memoryless(s.stop(v).to_vec()), 2, &law);
        let (c1, c2) = match (values(Variant::S1), values(Variant::S2)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return failure(name, e),
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        let row_ok = c1.ordered()
            && c2.ordered()
            && close(c1.independent, s.beta1())
            && close(c1.observations, s.beta1())
            && close(c2.states, s.beta2())
            && close(c2.both, s.beta2());
        ok &= row_ok;
        rows.push(json!({ "s1": c1, "s2": c2, "beta1": s.beta1(), "beta2": s.beta2(), "passed": row_ok }));
    }
    check(name, ok, json!({ "models": rows }))
}

/// Fixed-point solver against subset enumeration, and exact competitor bounds.
fn discrete_checks(seed: u64) -> Vec<Check> {
    let shapes = [(2, 3), (3, 4), (4, 5), (3, 8), (8, 8), (4, 16)];
    let mut oracle_ok = true;
    let mut optimal_ok = true;
    let mut worst_weight_gap: f64 = 0.0;
    let mut worst_beta_gap: f64 = 0.0;
    let mut cases = 0;
    for (i, &(states, symbols)) in shapes.iter().enumerate() {
        let hmm = match make_discrete(random_discrete_model(states, symbols, seed.wrapping_add(2000 + i as u64))) {
            Ok(h) => h,
            Err(e) => return vec![failure("discrete oracle", e)],
        };
        for gamma in [2.0, 10.0, 50.0] {
            cases += 1;
            let (sol, oracle) = match (
                solve_worst_case_prior_discrete(&hmm, gamma),
                worst_case_prior_by_enumeration(&hmm, gamma),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return vec![failure("discrete oracle", e)],
            };
            oracle_ok &= sol.prior.support == oracle.prior.support;
            for (a, b) in sol.prior.weights.iter().zip(&oracle.prior.weights) {
                worst_weight_gap = worst_weight_gap.max((a - b).abs());
            }
            worst_beta_gap = worst_beta_gap.max((sol.prior.beta2 - oracle.prior.beta2).abs());
            match DiscreteShewhart::new(&hmm, gamma, PriorMethod::FixedPoint).and_then(|s| discrete_optimality_check(&s)) {
                Ok(r) => optimal_ok &= r.passed(),
                Err(e) => return vec![failure("discrete optimality", e)],
            }
        }
    }
    oracle_ok &= worst_weight_gap <= 1e-9 && worst_beta_gap <= 1e-12;
    vec![
        check(
            "discrete oracle",
            oracle_ok,
            json!({ "cases": cases, "max_weight_gap": worst_weight_gap, "max_beta2_gap": worst_beta_gap }),
        ),
        check("discrete optimality", optimal_ok, json!({ "cases": cases })),
    ]
}

fn theorem2_checks(gamma: f64, seed: u64, run: &RunConfig) -> Vec<Check> {
    let mut out = Vec::new();
    let model = make_gaussian_ar1(FIGURE_PARAMS).expect("figure parameters are valid");
    match GaussianShewhart::new(&model, gamma).and_then(|g| theorem2_gaussian(&g, K, run)) {
        Ok(r) => out.push(check("ratio bound gaussian family", r.passed() && r.checked() > 0, json!(r))),
        Err(e) => out.push(failure("ratio bound gaussian family", e)),
    }
    let discrete = make_discrete(random_discrete_model(3, 4, seed.wrapping_add(3000)))
        .map_err(|e| e.to_string())
        .and_then(|h| DiscreteShewhart::new(&h, gamma.min(20.0), PriorMethod::FixedPoint).map_err(|e| e.to_string()))
        .and_then(|s| theorem2_discrete(&s, 6, K, run).map_err(|e| e.to_string()));
    match discrete {
        Ok(r) => out.push(check("ratio bound discrete family", r.passed() && r.checked() > 0, json!(r))),
        Err(e) => out.push(failure("ratio bound discrete family", e)),
    }
    out
}

fn equalizer_checks(gamma: f64, run: &RunConfig) -> Vec<Check> {
    let model = make_gaussian_ar1(FIGURE_PARAMS).expect("figure parameters are valid");
    let g = match GaussianShewhart::new(&model, gamma) {
        Ok(g) => g,
        Err(e) => return vec![failure("equalizer", e)],
    };
    let mut out = Vec::new();
    for v in [Variant::S1, Variant::S2] {
        let name = format!("equalizer {v}");
        let policy = g.policy(v);
        match equalizer_check(&model, &policy, &EQUALIZER_TIMES, Some(g.state_blind_detection(v)), K, run) {
            Ok(r) => out.push(check(&name, r.passed(), json!(r))),
            Err(e) => out.push(failure(&name, e)),
        }
    }
    let control = ParityShewhart {
        region: g.region(Variant::S1),
        shrink: 0.5,
    };
    let name = "equalizer negative control";
    match equalizer_check(&model, &control, &[0, 1, 2], None, K, run) {
        Ok(r) => out.push(Check {
            name: name.into(),
            expect_fail: true,
            passed: !r.passed(),
            detail: json!(r),
        }),
        Err(e) => out.push(failure(name, e)),
    }
    out
}

/// Runs the whole corpus. Monte-Carlo checks use `run`; `gamma` sets the
/// false-alarm period of the Gaussian checks.
pub fn run_corpus(gamma: f64, run: &RunConfig) -> VerifyReport {
    let seed = run.seed;
    let mut checks = vec![
        lemma1_corpus(seed, Reward::Detection, Mode::Min),
        lemma1_corpus(seed, Reward::Delay { cap: 2 }, Mode::Max),
        criteria_check(seed, 10.0),
    ];
    checks.extend(discrete_checks(seed));
    checks.extend(theorem2_checks(gamma, seed, run));
    checks.extend(equalizer_checks(gamma, run));
    VerifyReport {
        gamma,
        run: *run,
        checks,
    }
}
