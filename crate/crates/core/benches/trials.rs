use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ppns::attack::{run_attack, toy_matrix, AttackConfig, TOY_TARGET};
use ppns::eval::{run_experiment, ExperimentConfig};
use ppns::{Execution, ItemId, RatingMatrix, StrategyConfig, StrategyKind, UserId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synthetic(users: u32, items: u32, density: f64) -> RatingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut rows = Vec::new();
    for u in 1..=users {
        for i in 1..=items {
            if rng.random::<f64>() < density {
                rows.push((UserId(u), ItemId(i), rng.random_range(1..=5)));
            }
        }
    }
    RatingMatrix::from_triples(rows).unwrap()
}

fn experiment(c: &mut Criterion) {
    let matrix = synthetic(400, 300, 0.08);
    let mut group = c.benchmark_group("experiment");
    group.sample_size(10);
    for execution in [Execution::Sequential, Execution::Parallel] {
        let config = ExperimentConfig {
            base: StrategyConfig {
                k: 20,
                ..StrategyConfig::default()
            },
            values: vec![0.3, 0.7],
            trials: 256,
            execution,
            ..ExperimentConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(execution), &config, |b, cfg| {
            b.iter(|| black_box(run_experiment(cfg, &matrix).unwrap()))
        });
    }
    group.finish();
}

fn attack(c: &mut Criterion) {
    let matrix = toy_matrix(400);
    let mut group = c.benchmark_group("attack");
    group.sample_size(10);
    for execution in [Execution::Sequential, Execution::Parallel] {
        let strategy = StrategyConfig {
            kind: StrategyKind::Ppns,
            k: 20,
            ..StrategyConfig::default()
        };
        let config = AttackConfig {
            trials: 200,
            execution,
            ..AttackConfig::new(TOY_TARGET, strategy)
        };
        group.bench_with_input(BenchmarkId::from_parameter(execution), &config, |b, cfg| {
            b.iter(|| black_box(run_attack(&matrix, cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, experiment, attack);
criterion_main!(benches);
