use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use phjb_bench::{lq, start, wiggle};
use phjb_core::bsde::{solve_lsmc, RegressionSpec};
use phjb_core::calculus::{eval_gauge, eval_upsilon};
use phjb_core::value::{value_direct, PolicyClass};
use phjb_core::{simulate, Policy, SimOptions, SpectralOperator};

fn gauge(c: &mut Criterion) {
    let p = wiggle(256, 8);
    c.bench_function("upsilon-jet/256x8", |b| {
        b.iter(|| eval_upsilon(black_box(&p), 3.0).unwrap())
    });
    let q = p.restrict(128).unwrap();
    let op = SpectralOperator::dirichlet_laplacian(8).unwrap();
    c.bench_function("gauge-pair/128-256", |b| {
        b.iter(|| eval_gauge(black_box(&q), &p, &op, 3.0).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let model = lq();
    let x0 = start(0.01, &[0.5]);
    let policy = Policy::feedback_x(-1.0);
    c.bench_function("simulate/lq-1000x100", |b| {
        b.iter(|| simulate(&model, &x0, &policy, &SimOptions::new(1000, 1)).unwrap())
    });
}

fn bsde(c: &mut Criterion) {
    let model = lq();
    let x0 = start(0.01, &[0.5]);
    let batch = simulate(&model, &x0, &Policy::feedback_x(-1.0), &SimOptions::new(2000, 2)).unwrap();
    let spec = RegressionSpec::default();
    c.bench_function("lsmc/lq-2000x100", |b| {
        b.iter(|| solve_lsmc(&model, black_box(&batch), &spec).unwrap())
    });
}

fn value(c: &mut Criterion) {
    let model = lq();
    let class = PolicyClass::FeedbackOnFeatures {
        gains_x: vec![-1.5, -1.0, -0.5],
        gains_max: vec![0.0],
        gains_integral: vec![0.0],
        offsets: vec![0.0],
    };
    let spec = RegressionSpec::default();
    let mut g = c.benchmark_group("value");
    g.sample_size(10);
    g.bench_function("direct/lq-3-policies", |b| {
        b.iter_batched(
            || start(0.02, &[1.0]),
            |x0| value_direct(&model, &x0, &class, &SimOptions::new(1000, 3), &spec).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, gauge, simulation, bsde, value);
criterion_main!(benches);
