use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use sdc_core::fixtures::random_pencil_sweep;
use sdc_core::par::Execution;
use sdc_core::pencil::classify_pencils;
use sdc_core::polynomial::{delay_stability_margin_with, MarginOptions, Polynomial};
use sdc_core::Tolerances;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn margin(c: &mut Criterion) {
    let m0 = Polynomial::from_real_roots(&[-1.5, -4.0, -5.0]);
    let m1 = Polynomial::new(vec![0.2, 0.1]);
    let num = Polynomial::new(vec![0.8, 0.3]);
    let mut group = c.benchmark_group("margin");
    for points in [4_096usize, 65_536] {
        for (name, execution) in MODES {
            let opts = MarginOptions { grid_points: points, execution, ..MarginOptions::default() };
            group.bench_with_input(BenchmarkId::new(name, points), &opts, |b, opts| {
                b.iter(|| delay_stability_margin_with(&m0, &m1, &num, 1.0, 0.25, black_box(opts)).unwrap())
            });
        }
    }
    group.finish();
}

fn pencil_sweep(c: &mut Criterion) {
    let systems: Vec<_> = random_pencil_sweep(&mut ChaCha8Rng::seed_from_u64(7), 200, 2..=5)
        .into_iter()
        .map(|(sys, _)| sys)
        .collect();
    let tol = Tolerances::default();
    let mut group = c.benchmark_group("pencil_sweep");
    group.sample_size(20);
    for (name, execution) in MODES {
        group.bench_function(name, |b| b.iter(|| classify_pencils(black_box(&systems), &tol, execution)));
    }
    group.finish();
}

criterion_group!(benches, margin, pencil_sweep);
criterion_main!(benches);
