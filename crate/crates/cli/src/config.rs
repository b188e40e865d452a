//! Flag and config-file merging. Flags win over the file; the seed falls back
//! to `HMMCD_SEED` and then to a fixed default.

use std::path::{Path, PathBuf};

use clap::Args;
use hmmcd_core::figure::{log_grid, DEFAULT_HIGH, DEFAULT_LOW, DEFAULT_POINTS, FIGURE_PARAMS};
use hmmcd_core::{make_discrete, make_gaussian_ar1, DiscreteHmm, DiscreteModel, GaussianAr1, GaussianAr1Params};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "HMMCD_SEED";
pub const DEFAULT_SEED: u64 = 20240601;
pub const DEFAULT_WORKERS: usize = 4;

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// AR(1) coefficient of the hidden state.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Stationary mean of the hidden state.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Innovation variance of the hidden state.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Discrete model JSON; replaces the Gaussian model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// A value, a comma list, or `lo:hi:n` for `n` log-spaced points.
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Partition count; part of the determinism key together with the seed.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Solve the worst-case prior by subset enumeration.
    #[arg(long)]
    pub oracle: bool,
    /// JSON file with any of the above keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum GammaValue {
    One(f64),
    List(Vec<f64>),
    Spec(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub mu: Option<f64>,
    pub sigma2: Option<f64>,
    pub model: Option<PathBuf>,
    pub gamma: Option<GammaValue>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub oracle: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Gaussian { alpha: f64, mu: f64, sigma2: f64 },
    Discrete { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Config,
    Env,
    Default,
}

/// The configuration a command actually ran with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveConfig {
    pub model: ModelSpec,
    pub gammas: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub oracle: bool,
}

pub enum LoadedModel {
    Gaussian(GaussianAr1),
    Discrete(DiscreteHmm),
}

pub fn parse_gamma(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Config(format!("gamma: {why} in {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let values = if let [lo, hi, n] = spec.split(':').collect::<Vec<_>>()[..] {
        let n: usize = n.trim().parse().map_err(|_| bad("point count is not an integer"))?;
        let (lo, hi) = (num(lo)?, num(hi)?);
        if n < 2 || !(hi > lo) {
            return Err(bad("range needs lo < hi and at least 2 points"));
        }
        log_grid(lo, hi, n)
    } else {
        spec.split(',').map(num).collect::<Result<_, _>>()?
    };
    check_gammas(&values)?;
    Ok(values)
}

fn check_gammas(values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config("gamma: no values".into()));
    }
    if let Some(g) = values.iter().find(|g| !(**g > 1.0 && g.is_finite())) {
        return Err(CliError::Config(format!("gamma: must exceed 1, got {g}")));
    }
    Ok(())
}

fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

/// Subcommand-specific defaults.
pub struct Defaults {
    pub gammas: fn() -> Vec<f64>,
    pub trials: u64,
}

pub fn figure_gammas() -> Vec<f64> {
    log_grid(DEFAULT_LOW, DEFAULT_HIGH, DEFAULT_POINTS)
}

pub fn single_gamma() -> Vec<f64> {
    vec![100.0]
}

impl CommonArgs {
    pub fn resolve(&self, defaults: &Defaults) -> Result<EffectiveConfig, CliError> {
        let file = match &self.config {
            Some(p) => read_file_config(p)?,
            None => FileConfig::default(),
        };
        let model_path = self.model.clone().or(file.model);
        let gaussian = [self.alpha.or(file.alpha), self.mu.or(file.mu), self.sigma2.or(file.sigma2)];
        let model = match model_path {
            Some(path) => {
                if gaussian.iter().any(Option::is_some) {
                    return Err(CliError::Config("model: a discrete model excludes --alpha/--mu/--sigma2".into()));
                }
                ModelSpec::Discrete { path }
            }
            None => ModelSpec::Gaussian {
                alpha: gaussian[0].unwrap_or(FIGURE_PARAMS.alpha),
                mu: gaussian[1].unwrap_or(FIGURE_PARAMS.mu),
                sigma2: gaussian[2].unwrap_or(FIGURE_PARAMS.sigma2),
            },
        };
        let gammas = match (&self.gamma, file.gamma) {
            (Some(s), _) => parse_gamma(s)?,
            (None, Some(GammaValue::Spec(s))) => parse_gamma(&s)?,
            (None, Some(GammaValue::One(g))) => {
                check_gammas(&[g])?;
                vec![g]
            }
            (None, Some(GammaValue::List(v))) => {
                check_gammas(&v)?;
                v
            }
            (None, None) => (defaults.gammas)(),
        };
        let (seed, seed_source) = match (self.seed, file.seed, std::env::var(SEED_ENV)) {
            (Some(s), _, _) => (s, SeedSource::Flag),
            (None, Some(s), _) => (s, SeedSource::Config),
            (None, None, Ok(v)) => (
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("{SEED_ENV}: not an unsigned integer: {v:?}")))?,
                SeedSource::Env,
            ),
            (None, None, Err(_)) => (DEFAULT_SEED, SeedSource::Default),
        };
        let workers = self.workers.or(file.workers).unwrap_or(DEFAULT_WORKERS);
        if workers == 0 {
            return Err(CliError::Config("workers: must be at least 1".into()));
        }
        Ok(EffectiveConfig {
            model,
            gammas,
            trials: self.trials.or(file.trials).unwrap_or(defaults.trials),
            seed,
            seed_source,
            workers,
            out: self.out.clone().or(file.out),
            oracle: self.oracle || file.oracle.unwrap_or(false),
        })
    }
}

impl EffectiveConfig {
    pub fn load_model(&self) -> Result<LoadedModel, CliError> {
        match &self.model {
            ModelSpec::Gaussian { alpha, mu, sigma2 } => make_gaussian_ar1(GaussianAr1Params {
                alpha: *alpha,
                mu: *mu,
                sigma2: *sigma2,
            })
            .map(LoadedModel::Gaussian)
            .map_err(|e| CliError::Config(e.to_string())),
            ModelSpec::Discrete { path } => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                let raw = DiscreteModel::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?;
                make_discrete(raw)
                    .map(LoadedModel::Discrete)
                    .map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_forms() {
        assert_eq!(parse_gamma("100").unwrap(), vec![100.0]);
        assert_eq!(parse_gamma("2,10").unwrap(), vec![2.0, 10.0]);
        let g = parse_gamma("1.05:1000:60").unwrap();
        assert_eq!((g.len(), g[0], g[59]), (60, 1.05, 1000.0));
        assert!(parse_gamma("1.0").is_err());
        assert!(parse_gamma("10:2:5").is_err());
        assert!(parse_gamma("x").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"alpha": 0.3, "gamma": [5, 7], "seed": 9, "trials": 20000}"#).unwrap();
        let args = CommonArgs {
            alpha: Some(0.4),
            seed: Some(3),
            config: Some(path),
            ..Default::default()
        };
        let defaults = Defaults {
            gammas: single_gamma,
            trials: 1,
        };
        let c = args.resolve(&defaults).unwrap();
        assert_eq!(c.gammas, vec![5.0, 7.0]);
        assert_eq!((c.seed, c.seed_source), (3, SeedSource::Flag));
        assert_eq!(c.trials, 20000);
        assert!(matches!(c.model, ModelSpec::Gaussian { alpha, .. } if alpha == 0.4));
    }

    #[test]
    fn unknown_config_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"alpah": 0.3}"#).unwrap();
        let args = CommonArgs {
            config: Some(path),
            ..Default::default()
        };
        let defaults = Defaults {
            gammas: single_gamma,
            trials: 1,
        };
        assert!(matches!(args.resolve(&defaults), Err(CliError::Config(_))));
    }
}
