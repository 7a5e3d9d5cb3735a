use aloe_bench::{labeled_subset, probabilities, reference};
use aloe_core::acquisition::score;
use aloe_core::al_loop::seed_initial;
use aloe_core::classifier::train;
use aloe_core::rng::{run_rng, seeded};
use aloe_core::{
    run_round, AcquisitionStrategy, ExperimentConfig, Mode, Rule, ScoredPool, SimulatedOracle, TrainConfig,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

fn training(c: &mut Criterion) {
    let d = reference(400);
    let mut group = c.benchmark_group("train_100_epochs");
    for n in [30, 330, 2400] {
        let (ids, labels) = labeled_subset(&d, n);
        let x = d.gather(&ids);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| train(x.view(), &labels, 6, &TrainConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let n = 2400;
    let probs = ndarray::Array2::from_shape_vec((n, 6), probabilities(n, 6, 3)).unwrap();
    let ids: Vec<usize> = (0..n).collect();
    let mut group = c.benchmark_group("score_pool");
    group.throughput(Throughput::Elements(n as u64));
    for rule in [Rule::SmallestMargin, Rule::Entropy, Rule::Random] {
        group.bench_function(rule.as_str(), |b| {
            let mut rng = seeded(0);
            b.iter(|| score(black_box(probs.view()), rule, &mut rng).unwrap())
        });
    }
    for mode in [Mode::ClassAware, Mode::ClassAgnostic] {
        let pool = ScoredPool::new(ids.clone(), probs.view(), Rule::SmallestMargin, &mut seeded(0)).unwrap();
        group.bench_function(format!("select/{mode}"), |b| b.iter(|| black_box(&pool).select(mode)));
    }
    group.finish();
}

fn round(c: &mut Criterion) {
    let d = reference(400);
    let config = ExperimentConfig {
        strategy: AcquisitionStrategy::new(Rule::SmallestMargin, Mode::ClassAware),
        ..Default::default()
    };
    let seeded_state = seed_initial(&d, 5, run_rng(1, 0), &mut SimulatedOracle::new(&d)).unwrap();
    c.bench_function("al_round/seed_budget", |b| {
        b.iter_batched(
            || seeded_state.clone(),
            |mut state| {
                let mut oracle = SimulatedOracle::new(&d);
                run_round(&mut state, &d, &config, &mut oracle).unwrap()
            },
            criterion::BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, training, scoring, round);
criterion_main!(benches);
