//! Exact finite-horizon detection game on discrete models.
//!
//! The adversary's data `w_0, w_1, ...` generate a history tree. A stopping
//! time on that tree is an antichain of nodes (stop there, never below), with
//! "never stop" on every path the antichain misses. For node `n = (t, w_0..w_t)`
//!
//! ```text
//! N(n) = E[φ(T, t) 1{T > t} 1{history = n}]    D(n) = P(T > t, history = n)
//! ```
//!
//! so a stopping time `A` scores `Σ_A N / Σ_A D`. The enumerator compares the
//! best score over every antichain with the best single-node ratio.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{make_discrete, random_discrete_model, ChangeModel, DiscreteHmm};

/// Largest history tree the enumerator will build.
pub const HISTORY_CAP: usize = 100_000;
/// Largest number of stopping times scored explicitly.
pub const STOPPING_TIME_CAP: u64 = 2_000_000;
/// Largest number of joint `(z, ξ, w)` paths walked.
pub const PATH_CAP: u64 = 20_000_000;
/// Relative tolerance for `lhs = rhs`.
pub const EXACTNESS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("{what} count {size} exceeds cap {cap}")]
    TooLarge { what: &'static str, size: u64, cap: u64 },
    #[error("the detector has alarmed on every path before any change could be scored")]
    NoSurvivors,
    #[error("invalid game: {0}")]
    Invalid(String),
}

/// How the adversary's data relate to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WEncoding {
    /// i.i.d. symbols with the given law, independent of `(ξ, z)`.
    Independent(Vec<f64>),
    Observations,
    States,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reward {
    /// `φ(t, s) = 1{t = s + 1}`
    Detection,
    /// `φ(t, s) = min((t - s)⁺, cap)`
    Delay { cap: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Min,
    Max,
}

impl Mode {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Mode::Min => a < b,
            Mode::Max => a > b,
        }
    }

    fn worst(self) -> f64 {
        match self {
            Mode::Min => f64::INFINITY,
            Mode::Max => f64::NEG_INFINITY,
        }
    }
}

type Hazard = Arc<dyn Fn(&[usize]) -> f64 + Send + Sync>;

/// A detector given by its alarm probability at `t` given `ξ_1..ξ_t` and no
/// earlier alarm.
#[derive(Clone)]
pub struct GameDetector {
    hazard: Hazard,
}

impl std::fmt::Debug for GameDetector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("GameDetector")
    }
}

impl GameDetector {
    pub fn new(hazard: impl Fn(&[usize]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            hazard: Arc::new(hazard),
        }
    }

    /// Alarm with probability `stop[ξ_t]` at each step.
    pub fn memoryless(stop: Vec<f64>) -> Self {
        Self::new(move |h: &[usize]| h.last().map_or(0.0, |&x| stop[x]))
    }

    /// Alarm at the first occurrence of `symbol`.
    pub fn first_hit(symbol: usize) -> Self {
        Self::new(move |h: &[usize]| f64::from(u8::from(h.last() == Some(&symbol))))
    }

    /// Alarm probability drawn at random per `(ξ_{t-1}, ξ_t)` pair.
    pub fn random_pairwise(symbols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table: Vec<f64> = (0..(symbols + 1) * symbols)
            .map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() })
            .collect();
        Self::new(move |h: &[usize]| match h {
            [] => 0.0,
            [x] => table[symbols * symbols + x],
            [.., p, x] => table[p * symbols + x],
        })
    }

    pub fn hazard(&self, history: &[usize]) -> f64 {
        (self.hazard)(history)
    }
}

#[derive(Debug, Clone)]
pub struct FiniteGame {
    pub hmm: DiscreteHmm,
    pub w: WEncoding,
    pub reward: Reward,
    /// Last time at which the adversary may impose the change.
    pub horizon: u64,
    pub detector: GameDetector,
}

#[derive(Debug, Clone)]
struct Node {
    time: u64,
    parent: Option<usize>,
    symbol: usize,
    children: Vec<usize>,
    num: f64,
    den: f64,
}

/// The w-history tree with each node's `(N, D)`.
#[derive(Debug, Clone)]
pub struct GameTree {
    nodes: Vec<Node>,
    roots: Vec<usize>,
}

/// A node attaining the single-node bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attainment {
    pub time: u64,
    /// `w_0..w_time` as symbol indices.
    pub history: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Result {
    pub mode: Mode,
    /// Best score over every stopping time on the history tree.
    pub lhs: f64,
    /// Best conditional reward over times and histories.
    pub rhs: f64,
    pub attaining: Vec<Attainment>,
    pub stopping_times: u64,
    pub histories: usize,
}

impl Lemma1Result {
    pub fn gap(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn holds(&self) -> bool {
        self.gap() <= EXACTNESS_TOLERANCE * self.rhs.abs().max(1.0)
    }
}

struct Builder<'a> {
    game: &'a FiniteGame,
    states: usize,
    symbols: usize,
    nodes: Vec<Node>,
    index: HashMap<(usize, usize), usize>,
    roots: Vec<usize>,
    obs: Vec<usize>,
}

impl Builder<'_> {
    fn node(&mut self, parent: Option<usize>, symbol: usize, time: u64) -> Result<usize, GameError> {
        let key = (parent.unwrap_or(usize::MAX), symbol);
        if let Some(&id) = self.index.get(&key) {
            return Ok(id);
        }
        if self.nodes.len() >= HISTORY_CAP {
            return Err(GameError::TooLarge {
                what: "history",
                size: self.nodes.len() as u64 + 1,
                cap: HISTORY_CAP as u64,
            });
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            time,
            parent,
            symbol,
            children: Vec::new(),
            num: 0.0,
            den: 0.0,
        });
        self.index.insert(key, id);
        match parent {
            Some(p) => self.nodes[p].children.push(id),
            None => self.roots.push(id),
        }
        Ok(id)
    }

    /// `(symbol, probability)` pairs for the adversary's next datum.
    fn w_symbols(&self, x: Option<usize>, z: usize) -> Vec<(usize, f64)> {
        match &self.game.w {
            WEncoding::Independent(p) => p.iter().copied().enumerate().filter(|&(_, q)| q > 0.0).collect(),
            WEncoding::Observations => vec![(x.unwrap_or(0), 1.0)],
            WEncoding::States => vec![(z, 1.0)],
            WEncoding::Both => vec![(x.map_or(z, |x| (x + 1) * self.states + z), 1.0)],
        }
    }

    fn hazard_with(&mut self, x: usize) -> f64 {
        self.obs.push(x);
        let h = self.game.detector.hazard(&self.obs);
        self.obs.pop();
        h
    }

    /// `E[φ(T, t) | T > t, z_t = z, ξ_1..ξ_t]` with the change at `t`.
    fn reward(&mut self, z: usize) -> f64 {
        match self.game.reward {
            Reward::Detection => {
                let hmm = &self.game.hmm;
                let mut total = 0.0;
                for z1 in 0..self.states {
                    let g = hmm.post_transition(z1, z);
                    if g == 0.0 {
                        continue;
                    }
                    for x in 0..self.symbols {
                        let f = hmm.post_obs_density(x, z1);
                        if f > 0.0 {
                            total += g * f * self.hazard_with(x);
                        }
                    }
                }
                total
            }
            Reward::Delay { cap } => self.delay(z, cap),
        }
    }

    fn delay(&mut self, z: usize, steps: u64) -> f64 {
        if steps == 0 {
            return 0.0;
        }
        let mut rest = 0.0;
        for z1 in 0..self.states {
            let g = self.game.hmm.post_transition(z1, z);
            if g == 0.0 {
                continue;
            }
            for x in 0..self.symbols {
                let f = self.game.hmm.post_obs_density(x, z1);
                if f == 0.0 {
                    continue;
                }
                self.obs.push(x);
                let survive = 1.0 - self.game.detector.hazard(&self.obs);
                if survive > 0.0 {
                    rest += g * f * survive * self.delay(z1, steps - 1);
                }
                self.obs.pop();
            }
        }
        1.0 + rest
    }

    fn walk(&mut self, id: usize, z: usize, prob: f64, survive: f64) -> Result<(), GameError> {
        let time = self.nodes[id].time;
        let mass = prob * survive;
        if mass > 0.0 {
            let r = self.reward(z);
            let node = &mut self.nodes[id];
            node.den += mass;
            node.num += mass * r;
        }
        if time == self.game.horizon {
            return Ok(());
        }
        for z1 in 0..self.states {
            let g = self.game.hmm.pre_transition(z1, z);
            if g == 0.0 {
                continue;
            }
            for x in 0..self.symbols {
                let f = self.game.hmm.pre_obs_density(x);
                if f == 0.0 {
                    continue;
                }
                self.obs.push(x);
                let next_survive = survive * (1.0 - self.game.detector.hazard(&self.obs));
                for (w, pw) in self.w_symbols(Some(x), z1) {
                    let child = self.node(Some(id), w, time + 1)?;
                    self.walk(child, z1, prob * g * f * pw, next_survive)?;
                }
                self.obs.pop();
            }
        }
        Ok(())
    }
}

fn path_count(game: &FiniteGame, states: usize, symbols: usize) -> u64 {
    let w = match &game.w {
        WEncoding::Independent(p) => p.iter().filter(|&&q| q > 0.0).count() as u64,
        _ => 1,
    };
    let step = (states * symbols) as u64 * w;
    (0..game.horizon).fold(states as u64 * w, |acc, _| acc.saturating_mul(step))
}

impl GameTree {
    pub fn build(game: &FiniteGame) -> Result<Self, GameError> {
        let states = game.hmm.state_count();
        let symbols = game.hmm.obs_count();
        if let WEncoding::Independent(p) = &game.w {
            let total: f64 = p.iter().sum();
            if p.is_empty() || p.iter().any(|q| !(*q >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                return Err(GameError::Invalid("independent w law must be a probability vector".into()));
            }
        }
        let paths = path_count(game, states, symbols);
        if paths > PATH_CAP {
            return Err(GameError::TooLarge {
                what: "path",
                size: paths,
                cap: PATH_CAP,
            });
        }
        let mut b = Builder {
            game,
            states,
            symbols,
            nodes: Vec::new(),
            index: HashMap::new(),
            roots: Vec::new(),
            obs: Vec::new(),
        };
        for z0 in 0..states {
            let p0 = game.hmm.stationary_density(z0);
            if p0 == 0.0 {
                continue;
            }
            for (w, pw) in b.w_symbols(None, z0) {
                let root = b.node(None, w, 0)?;
                b.walk(root, z0, p0 * pw, 1.0)?;
            }
        }
        if b.nodes.iter().all(|n| n.den == 0.0) {
            return Err(GameError::NoSurvivors);
        }
        Ok(Self {
            nodes: b.nodes,
            roots: b.roots,
        })
    }

    pub fn histories(&self) -> usize {
        self.nodes.len()
    }

    fn history(&self, mut id: usize) -> Vec<usize> {
        let mut h = vec![self.nodes[id].symbol];
        while let Some(p) = self.nodes[id].parent {
            h.push(self.nodes[p].symbol);
            id = p;
        }
        h.reverse();
        h
    }

    /// Best single-node ratio, with every node within tolerance of it.
    pub fn rhs(&self, mode: Mode) -> (f64, Vec<Attainment>) {
        let ratio = |n: &Node| n.num / n.den;
        let best = self
            .nodes
            .iter()
            .filter(|n| n.den > 0.0)
            .map(ratio)
            .fold(mode.worst(), |a, r| if mode.better(r, a) { r } else { a });
        let tol = EXACTNESS_TOLERANCE * best.abs().max(1.0);
        let attaining = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.den > 0.0 && (ratio(n) - best).abs() <= tol)
            .map(|(id, n)| Attainment {
                time: n.time,
                history: self.history(id),
                value: ratio(n),
            })
            .collect();
        (best, attaining)
    }

    fn antichain_count(&self, id: usize) -> u64 {
        let below = self.nodes[id]
            .children
            .iter()
            .fold(1u64, |acc, &c| acc.saturating_mul(self.antichain_count(c)));
        below.saturating_add(1)
    }

    /// Number of stopping times, counting the one that never stops.
    pub fn stopping_time_count(&self) -> u64 {
        self.roots
            .iter()
            .fold(1u64, |acc, &r| acc.saturating_mul(self.antichain_count(r)))
    }

    fn combine(&self, ids: &[usize]) -> Vec<(f64, f64)> {
        let mut acc = vec![(0.0, 0.0)];
        for &c in ids {
            let options = self.options(c);
            acc = acc
                .iter()
                .flat_map(|&(n, d)| options.iter().map(move |&(m, e)| (n + m, d + e)))
                .collect();
        }
        acc
    }

    /// `(Σ N, Σ D)` for every antichain of the subtree at `id`.
    fn options(&self, id: usize) -> Vec<(f64, f64)> {
        let node = &self.nodes[id];
        let mut out = self.combine(&node.children);
        out.push((node.num, node.den));
        out
    }

    /// Best score over every stopping time.
    pub fn lhs(&self, mode: Mode) -> Result<(f64, u64), GameError> {
        let count = self.stopping_time_count();
        if count > STOPPING_TIME_CAP {
            return Err(GameError::TooLarge {
                what: "stopping time",
                size: count,
                cap: STOPPING_TIME_CAP,
            });
        }
        let best = self
            .combine(&self.roots)
            .into_iter()
            .filter(|&(_, d)| d > 0.0)
            .map(|(n, d)| n / d)
            .fold(mode.worst(), |a, r| if mode.better(r, a) { r } else { a });
        Ok((best, count))
    }
}

pub fn lemma1_enumerate(game: &FiniteGame, mode: Mode) -> Result<Lemma1Result, GameError> {
    let tree = GameTree::build(game)?;
    let (lhs, stopping_times) = tree.lhs(mode)?;
    let (rhs, attaining) = tree.rhs(mode);
    Ok(Lemma1Result {
        mode,
        lhs,
        rhs,
        attaining,
        stopping_times,
        histories: tree.histories(),
    })
}

/// Worst-case detection under criteria i to iv.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriteriaValues {
    pub independent: f64,
    pub observations: f64,
    pub states: f64,
    pub both: f64,
}

impl CriteriaValues {
    /// Finer adversary information can only lower the bound.
    pub fn ordered(&self) -> bool {
        let le = |a: f64, b: f64| a <= b + EXACTNESS_TOLERANCE * b.abs().max(1.0);
        le(self.observations, self.independent)
            && le(self.both, self.observations)
            && le(self.states, self.independent)
            && le(self.both, self.states)
    }
}

pub fn criteria_bridge(
    hmm: &DiscreteHmm,
    detector: &GameDetector,
    horizon: u64,
    independent_law: &[f64],
) -> Result<CriteriaValues, GameError> {
    let value = |w: WEncoding| -> Result<f64, GameError> {
        let game = FiniteGame {
            hmm: hmm.clone(),
            w,
            reward: Reward::Detection,
            horizon,
            detector: detector.clone(),
        };
        Ok(GameTree::build(&game)?.rhs(Mode::Min).0)
    };
    Ok(CriteriaValues {
        independent: value(WEncoding::Independent(independent_law.to_vec()))?,
        observations: value(WEncoding::Observations)?,
        states: value(WEncoding::States)?,
        both: value(WEncoding::Both)?,
    })
}

/// A small random game whose stopping times can all be scored.
pub fn random_game(seed: u64, reward: Reward) -> FiniteGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (states, symbols) = if seed % 4 == 3 {
        (2, 2)
    } else {
        (rng.random_range(2..=3), rng.random_range(2..=3))
    };
    let hmm = make_discrete(random_discrete_model(states, symbols, seed)).expect("random model is valid");
    let w = match seed % 4 {
        0 => {
            let a = rng.random_range(0.2..0.8);
            WEncoding::Independent(vec![a, 1.0 - a])
        }
        1 => WEncoding::Observations,
        2 => WEncoding::States,
        _ => WEncoding::Both,
    };
    let detector = if rng.random::<bool>() {
        GameDetector::memoryless((0..symbols).map(|_| rng.random::<f64>() * 0.6).collect())
    } else {
        GameDetector::random_pairwise(symbols, seed ^ 0x5eed)
    };
    let mut game = FiniteGame {
        hmm,
        w,
        reward,
        horizon: 3,
        detector,
    };
    while game.horizon > 1 {
        match GameTree::build(&game) {
            Ok(t) if t.stopping_time_count() <= STOPPING_TIME_CAP / 4 => break,
            _ => game.horizon -= 1,
        }
    }
    game
}
