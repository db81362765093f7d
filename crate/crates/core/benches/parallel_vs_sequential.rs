use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use koopgram::balance::{balance_matrices, reduction_error_sweep, BalanceOptions};
use koopgram::dictionary::example1_dictionary;
use koopgram::dynsys::{DiscreteSystem, InputSignal, OscillatorParams, DEFAULT_DIVERGENCE_CAP};
use koopgram::edmd::build_snapshots;
use koopgram::exec::Exec;
use koopgram::gramians::{controllability_sum, observability_sum, Horizon};
use koopgram::linalg::{random_matrix, random_stable};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn grid(k: usize) -> Vec<DVector<f64>> {
    (0..k * k)
        .map(|i| {
            let (a, b) = (i / k, i % k);
            let s = |j: usize| -0.5 + j as f64 / (k - 1) as f64;
            DVector::from_vec(vec![s(a), s(b)])
        })
        .collect()
}

fn simulate_batch(c: &mut Criterion) {
    let sys = DiscreteSystem::example3(OscillatorParams::default());
    let x0s = grid(32);
    let input = InputSignal::SinRamp { mu: 0.01 };
    let mut g = c.benchmark_group("simulate_batch_1024x200");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                sys.simulate_batch(black_box(&x0s), &input, 200, DEFAULT_DIVERGENCE_CAP, exec)
            })
        });
    }
    g.finish();
}

fn lift_snapshots(c: &mut Criterion) {
    let sys = DiscreteSystem::example1(OscillatorParams::default());
    let (dict, _, _) = example1_dictionary(OscillatorParams::default()).unwrap();
    // corners of the grid diverge over 100 steps; drop them as training does
    let trajs: Vec<_> = sys
        .simulate_batch(
            &grid(16),
            &InputSignal::Zero,
            100,
            DEFAULT_DIVERGENCE_CAP,
            Exec::Sequential,
        )
        .into_iter()
        .filter_map(Result::ok)
        .collect();
    let mut g = c.benchmark_group("build_snapshots_256x100");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_snapshots(black_box(&trajs), &dict, None, exec).unwrap())
        });
    }
    g.finish();
}

fn error_sweep(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 40;
    let a = random_stable(&mut rng, n, 0.9);
    let b = random_matrix(&mut rng, n, 2);
    let cm = random_matrix(&mut rng, 2, n);
    let xc = controllability_sum(&a, &b, Horizon::Infinite).unwrap();
    let xo = observability_sum(&a, &cm, Horizon::Infinite).unwrap();
    let bal = balance_matrices(&a, Some(&b), &cm, &xc, &xo, BalanceOptions::default()).unwrap();
    let inputs: Vec<Vec<DVector<f64>>> = (0..256)
        .map(|_| {
            (0..200)
                .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    let mut g = c.benchmark_group("reduction_error_sweep_n40_256x200");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| reduction_error_sweep(&bal, 10, black_box(&inputs), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = simulate_batch, lift_snapshots, error_sweep
}
criterion_main!(benches);
