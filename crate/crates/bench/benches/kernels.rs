use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use gcp::dynamics::{expected_gradients, integrate, GroundTruth, OdeConfig};
use gcp::nn::{backprop_step, HeadKind, MlpModel, Optimizer, OptimizerConfig, TrainConfig};
use gcp::prior::gcp_gradients;
use gcp::specfun::solve_a;
use gcp_bench::{prior_states, sine_training_set};

fn specfun(c: &mut Criterion) {
    c.bench_function("solve_a/sweep", |b| {
        b.iter(|| {
            for alpha in [1e-3, 0.5, 1.0, 2.0, 30.0, 1e3] {
                black_box(solve_a(black_box(alpha)).unwrap());
            }
        })
    });
}

fn gradients(c: &mut Criterion) {
    let states = prior_states();
    let gt = GroundTruth::new(0.0, 1.0).unwrap();
    c.bench_function("gcp_gradients", |b| {
        b.iter(|| {
            for p in &states {
                black_box(gcp_gradients(p, black_box(0.3)).unwrap());
            }
        })
    });
    c.bench_function("expected_gradients", |b| {
        b.iter(|| {
            for p in &states {
                black_box(expected_gradients(p, &gt).unwrap());
            }
        })
    });
}

fn ode(c: &mut Criterion) {
    let p0 = prior_states()[0];
    let gt = GroundTruth::new(0.0, 1.0).unwrap();
    let cfg = OdeConfig {
        step: 1e-2,
        max_time: 1.0,
        ..OdeConfig::default()
    };
    c.bench_function("integrate/rk4_100_steps", |b| {
        b.iter(|| black_box(integrate(&p0, &gt, &cfg).unwrap()))
    });
}

fn backprop(c: &mut Criterion) {
    let data = sine_training_set();
    let cfg = TrainConfig::default();
    let model = MlpModel::new(1, 50, 0.0, HeadKind::NormalGamma, 0).unwrap();
    let batch: Vec<usize> = (0..cfg.minibatch).collect();
    c.bench_function("backprop_step/gcp_h50_b32", |b| {
        b.iter_batched(
            || (model.clone(), Optimizer::new(OptimizerConfig::default(), model.n_params()).unwrap()),
            |(mut m, mut opt)| black_box(backprop_step(&mut m, &data, &batch, None, &cfg, &mut opt).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, specfun, gradients, ode, backprop);
criterion_main!(benches);
