use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hmmcd_core::adversary::game::{lemma1_enumerate, random_game, Mode, Reward};
use hmmcd_core::adversary::{estimate_worst_detection, AdversaryPolicy, RunConfig, DEFAULT_BAND};
use hmmcd_core::figure::FIGURE_PARAMS;
use hmmcd_core::model::random_discrete_model;
use hmmcd_core::shewhart::{DiscreteShewhart, GaussianShewhart, PriorMethod, Variant};
use hmmcd_core::{make_discrete, make_gaussian_ar1};

fn calibration(c: &mut Criterion) {
    let model = make_gaussian_ar1(FIGURE_PARAMS).unwrap();
    c.bench_function("gaussian calibration γ=100", |b| {
        b.iter(|| GaussianShewhart::new(&model, black_box(100.0)).unwrap())
    });
}

fn prior_solver(c: &mut Criterion) {
    let hmm = make_discrete(random_discrete_model(4, 16, 3)).unwrap();
    let mut group = c.benchmark_group("discrete prior 4x16");
    group.bench_function("fixed point", |b| {
        b.iter(|| DiscreteShewhart::new(&hmm, black_box(50.0), PriorMethod::FixedPoint).unwrap())
    });
    group.bench_function("enumeration", |b| {
        b.iter(|| DiscreteShewhart::new(&hmm, black_box(50.0), PriorMethod::Enumeration).unwrap())
    });
    group.finish();
}

fn detection_trials(c: &mut Criterion) {
    let model = make_gaussian_ar1(FIGURE_PARAMS).unwrap();
    let g = GaussianShewhart::new(&model, 100.0).unwrap();
    let s2 = g.policy(Variant::S2);
    let adversary = AdversaryPolicy::StateAt {
        time: 10,
        target: g.worst_state(Variant::S2).unwrap(),
        band: DEFAULT_BAND,
    };
    let run = RunConfig {
        trials: 100_000,
        seed: 1,
        workers: 1,
    };
    let mut group = c.benchmark_group("monte carlo");
    group.sample_size(10);
    group.bench_function("worst detection, 1e5 trials", |b| {
        b.iter(|| estimate_worst_detection(&model, &s2, &adversary, &run).unwrap())
    });
    group.finish();
}

fn game_enumeration(c: &mut Criterion) {
    c.bench_function("game enumeration seed 0", |b| {
        b.iter_batched(
            || random_game(0, Reward::Detection),
            |game| lemma1_enumerate(&game, Mode::Min).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(kernels, calibration, prior_solver, detection_trials, game_enumeration);
criterion_main!(kernels);
