use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hmmcd_core::adversary::{
    equalizer_check, estimate_arl, estimate_worst_detection, AdversaryPolicy, RunConfig, SimulationError,
};
use hmmcd_core::figure::{figure1_rows, write_csv};
use hmmcd_core::shewhart::{
    DiscreteShewhart, GaussianQuantities, GaussianShewhart, PriorMethod, ShewhartError, ShewhartPolicy, Variant,
};
use hmmcd_core::{ChangeModel, GaussianAr1Params};
use serde_json::{json, Value};

use crate::config::{figure_gammas, single_gamma, CommonArgs, Defaults, EffectiveConfig, LoadedModel, ModelSpec};
use crate::CliError;

const K: f64 = 3.0;

fn shewhart_error(e: ShewhartError) -> CliError {
    match e {
        ShewhartError::InvalidGamma(_) => CliError::Config(format!("gamma: {e}")),
        ShewhartError::NoConvergence { .. } | ShewhartError::NoSupport => CliError::Degenerate(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

fn simulation_error(e: SimulationError) -> CliError {
    match e {
        SimulationError::TooFewTrials { .. } => CliError::Config(format!("trials: {e}")),
        _ => CliError::Degenerate(e.to_string()),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error, what: &str| CliError::Io(format!("{what}: {e}"));
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| io(e, &path.display().to_string())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| io(e, "stdout")),
    }
}

fn emit_json(config: &EffectiveConfig, command: &str, results: Value) -> Result<(), CliError> {
    let report = json!({ "command": command, "config": config, "results": results });
    let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
    text.push('\n');
    emit(&config.out, &text)
}

fn quantities_json(q: &GaussianQuantities) -> Value {
    json!({
        "nu1": q.nu1, "nu2": q.nu2,
        "beta1": q.beta1, "beta2": q.beta2,
        "beta1_tilde": q.beta1_tilde, "beta2_tilde": q.beta2_tilde,
    })
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn calibrate(args: &CalibrateArgs) -> Result<(), CliError> {
    let config = args.common.resolve(&Defaults {
        gammas: single_gamma,
        trials: 0,
    })?;
    let results: Vec<Value> = match config.load_model()? {
        LoadedModel::Gaussian(model) => config
            .gammas
            .iter()
            .map(|&gamma| {
                let g = GaussianShewhart::new(&model, gamma).map_err(shewhart_error)?;
                let mut row = quantities_json(&g.quantities());
                row["gamma"] = json!(gamma);
                row["lr_threshold1"] = json!(g.calibration(Variant::S1).threshold);
                row["lr_threshold2"] = json!(g.calibration(Variant::S2).threshold);
                row["region1"] = json!(g.region(Variant::S1));
                row["region2"] = json!(g.region(Variant::S2));
                row["prior"] = json!(g.prior);
                Ok(row)
            })
            .collect::<Result<_, CliError>>()?,
        LoadedModel::Discrete(hmm) => {
            let method = if config.oracle {
                PriorMethod::Enumeration
            } else {
                PriorMethod::FixedPoint
            };
            config
                .gammas
                .iter()
                .map(|&gamma| {
                    let s = DiscreteShewhart::new(&hmm, gamma, method).map_err(shewhart_error)?;
                    Ok(json!({
                        "gamma": gamma,
                        "method": method,
                        "nu1": s.calibration1.threshold,
                        "q1": s.calibration1.randomization,
                        "nu2": s.calibration2.threshold,
                        "q2": s.calibration2.randomization,
                        "stop1": s.stop1,
                        "stop2": s.stop2,
                        "beta1": s.beta1(),
                        "beta2": s.beta2(),
                        "beta1_tilde": s.beta1_tilde(),
                        "beta2_tilde": s.beta2_tilde(),
                        "prior": s.prior,
                    }))
                })
                .collect::<Result<_, CliError>>()?
        }
    };
    emit_json(&config, "calibrate", Value::Array(results))
}

#[derive(Args, Debug)]
pub struct Figure1Args {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Prepend the analytic limit row at gamma = 1.
    #[arg(long)]
    pub limit_row: bool,
}

pub fn figure1(args: &Figure1Args) -> Result<(), CliError> {
    let config = args.common.resolve(&Defaults {
        gammas: figure_gammas,
        trials: 0,
    })?;
    let ModelSpec::Gaussian { alpha, mu, sigma2 } = config.model else {
        return Err(CliError::Config("model: figure1 needs the Gaussian model".into()));
    };
    if config.gammas.len() < 2 {
        return Err(CliError::Config("gamma: figure1 needs at least 2 points".into()));
    }
    let params = GaussianAr1Params { alpha, mu, sigma2 };
    let mut rows = figure1_rows(params, &config.gammas).map_err(shewhart_error)?;
    if args.limit_row {
        rows.insert(0, GaussianQuantities::limit_at_one());
    }
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows).expect("writing to memory");
    emit(&config.out, std::str::from_utf8(&buf).expect("ascii csv"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    S1,
    S2,
}

impl From<DetectorArg> for Variant {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::S1 => Variant::S1,
            DetectorArg::S2 => Variant::S2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversaryArg {
    /// Changes at the detector's worst state.
    State,
    /// Changes at time 0 without looking at the data.
    Independent,
    Fixed(u64),
    Geometric(f64),
}

fn parse_adversary(s: &str) -> Result<AdversaryArg, String> {
    match s.split_once(':') {
        None if s == "state" => Ok(AdversaryArg::State),
        None if s == "independent" => Ok(AdversaryArg::Independent),
        Some(("fixed", t)) => t.parse().map(AdversaryArg::Fixed).map_err(|e| format!("fixed time: {e}")),
        Some(("geometric", p)) => match p.parse::<f64>() {
            Ok(p) if p > 0.0 && p <= 1.0 => Ok(AdversaryArg::Geometric(p)),
            _ => Err("geometric parameter must be in (0, 1]".into()),
        },
        _ => Err("expected state, independent, fixed:<t> or geometric:<p>".into()),
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "s2")]
    pub detector: DetectorArg,
    /// state, independent, fixed:<t> or geometric:<p>
    #[arg(long, default_value = "state", value_parser = parse_adversary)]
    pub adversary: AdversaryArg,
    /// Half-width of the state band for the state adversary.
    #[arg(long, default_value_t = hmmcd_core::adversary::DEFAULT_BAND)]
    pub band: f64,
    /// Change time used by the state adversary.
    #[arg(long, default_value_t = 10)]
    pub change_time: u64,
    /// Horizon cap for the run-length estimate, default 50·gamma.
    #[arg(long)]
    pub arl_cap: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,5,10")]
    pub equalizer_times: Vec<u64>,
}

struct Target<S, O> {
    policy: ShewhartPolicy<O>,
    worst_state: Option<S>,
    aware: f64,
    blind: f64,
    bias: f64,
}

fn estimate_json(e: &hmmcd_core::montecarlo::MonteCarloEstimate, reference: f64, slack: f64) -> Value {
    json!({
        "estimate": e,
        "reference": reference,
        "slack": slack,
        "z": e.z_score(reference),
        "verdict": if e.agrees_with(reference, K, slack) { "PASS" } else { "FAIL" },
    })
}

fn simulate_target<M: ChangeModel>(
    model: &M,
    target: Target<M::State, M::Obs>,
    gamma: f64,
    args: &SimulateArgs,
    run: &RunConfig,
) -> Result<Value, CliError> {
    let cap = args.arl_cap.unwrap_or((50.0 * gamma).ceil() as u64);
    if (cap as f64) < 20.0 * gamma {
        return Err(CliError::Config(format!("arl_cap: {cap} is below 20·gamma")));
    }
    let arl = estimate_arl(model, &target.policy, cap, run).map_err(simulation_error)?;
    let (adversary, reference, slack) = match (args.adversary, target.worst_state) {
        (AdversaryArg::State, Some(z)) => (
            AdversaryPolicy::StateAt {
                time: args.change_time,
                target: z,
                band: args.band,
            },
            target.aware,
            target.bias,
        ),
        (AdversaryArg::State, None) => (AdversaryPolicy::FixedTime(args.change_time), target.aware, 0.0),
        (AdversaryArg::Independent, _) => (AdversaryPolicy::FixedTime(0), target.blind, 0.0),
        (AdversaryArg::Fixed(t), _) => (AdversaryPolicy::FixedTime(t), target.blind, 0.0),
        (AdversaryArg::Geometric(p), _) => (AdversaryPolicy::Geometric(p), target.blind, 0.0),
    };
    let detection = estimate_worst_detection(model, &target.policy, &adversary, run).map_err(simulation_error)?;
    let equalizer = equalizer_check(model, &target.policy, &args.equalizer_times, Some(target.blind), K, run)
        .map_err(simulation_error)?;
    Ok(json!({
        "gamma": gamma,
        "detector": target.policy.variant,
        "adversary": format!("{adversary:?}"),
        "arl": {
            "report": arl,
            "verdict": if arl.estimate.agrees_with(gamma, K, 0.0) { "PASS" } else { "FAIL" },
        },
        "detection": estimate_json(&detection.estimate, reference, slack),
        "detection_bookkeeping": {
            "never_triggered": detection.never_triggered,
            "false_alarms": detection.false_alarms,
            "effective_size": detection.effective_size,
            "mean_tau": detection.mean_tau,
        },
        "equalizer": {
            "report": equalizer,
            "verdict": if equalizer.passed() { "PASS" } else { "FAIL" },
        },
    }))
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config = args.common.resolve(&Defaults {
        gammas: single_gamma,
        trials: 100_000,
    })?;
    if let Some(t) = args.equalizer_times.iter().find(|&&t| t > 20) {
        return Err(CliError::Config(format!("equalizer_times: {t} is outside 0..=20")));
    }
    if !(args.band >= 0.0) {
        return Err(CliError::Config("band: must be nonnegative".into()));
    }
    let run = RunConfig {
        trials: config.trials,
        seed: config.seed,
        workers: config.workers,
    };
    let variant = Variant::from(args.detector);
    let model = config.load_model()?;
    let mut results = Vec::new();
    for &gamma in &config.gammas {
        let row = match &model {
            LoadedModel::Gaussian(m) => {
                let g = GaussianShewhart::new(m, gamma).map_err(shewhart_error)?;
                let target = Target {
                    policy: g.policy(variant),
                    worst_state: g.worst_state(variant),
                    aware: g.state_aware_detection(variant),
                    blind: g.state_blind_detection(variant),
                    bias: g.band_bias_bound(variant, args.band),
                };
                simulate_target(m, target, gamma, args, &run)?
            }
            LoadedModel::Discrete(hmm) => {
                let s = DiscreteShewhart::new(hmm, gamma, PriorMethod::FixedPoint).map_err(shewhart_error)?;
                let worst = (0..hmm.state_count())
                    .filter(|&z| hmm.model().stationary[z] > 0.0)
                    .min_by(|&a, &b| s.per_state_detection(variant, a).total_cmp(&s.per_state_detection(variant, b)));
                let blind = match variant {
                    Variant::S1 => s.beta1(),
                    Variant::S2 => s.beta2_tilde(),
                };
                let target = Target {
                    policy: s.policy(variant),
                    worst_state: worst,
                    aware: s.worst_state_detection(variant),
                    blind,
                    bias: 0.0,
                };
                simulate_target(hmm, target, gamma, args, &run)?
            }
        };
        results.push(row);
    }
    emit_json(&config, "simulate", Value::Array(results))
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let config = args.common.resolve(&Defaults {
        gammas: single_gamma,
        trials: 20_000,
    })?;
    if !matches!(config.model, ModelSpec::Gaussian { .. }) || config.gammas.len() != 1 {
        return Err(CliError::Config("verify runs its own corpus; pass at most one gamma and no model".into()));
    }
    let run = RunConfig {
        trials: config.trials,
        seed: config.seed,
        workers: config.workers,
    };
    run.check()
        .map_err(|(t, m)| CliError::Config(format!("trials: need at least {m}, got {t}")))?;
    let report = hmmcd_core::verify::run_corpus(config.gammas[0], &run);
    let passed = report.passed();
    emit_json(&config, "verify", json!(report))?;
    for c in &report.checks {
        let label = if c.expect_fail { " (expected to fail)" } else { "" };
        eprintln!("{} {}{label}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    if passed {
        Ok(())
    } else {
        Err(CliError::Verify(report.failed().join(", ")))
    }
}
