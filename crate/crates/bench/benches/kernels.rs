use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use crlbench_core::causal::{causal_value_iteration, fixtures, Policy};
use crlbench_core::envcore::stream_rng;
use crlbench_core::envs::{cartpole_step, make_variant};
use crlbench_core::numcore::{Activation, Graph, Mlp, MlpSpec, OutputActivation, ParamSet, Tensor};
use crlbench_core::rl::gae;
use rand::Rng;

fn mlp_forward_backward(c: &mut Criterion) {
    let mut params = ParamSet::new();
    let spec = MlpSpec::new(vec![12, 64, 64, 2], Activation::Tanh, OutputActivation::Identity);
    let mlp = Mlp::new(spec, &mut params, "pi", &mut stream_rng(0, 1)).unwrap();
    let mut rng = stream_rng(0, 2);
    let x = Tensor::new(vec![64, 12], (0..64 * 12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    c.bench_function("mlp_12x64x64x2_batch64_fwd_bwd", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let y = mlp.forward(&mut g, &params, xv).unwrap();
            let sq = g.square(y);
            let loss = g.mean(sq);
            black_box(g.backward(loss).unwrap());
        })
    });
}

fn gae_2048(c: &mut Criterion) {
    let mut rng = stream_rng(1, 1);
    let n = 2048;
    let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let values: Vec<f64> = (0..=n).map(|_| rng.random_range(0.0..10.0)).collect();
    let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.02)).collect();
    c.bench_function("gae_2048", |b| b.iter(|| black_box(gae(&rewards, &values, &dones, 0.99, 0.95).unwrap())));
}

fn cartpole_steps(c: &mut Criterion) {
    let p = make_variant("standard").unwrap();
    c.bench_function("cartpole_step_x1000", |b| {
        b.iter(|| {
            let mut s = [0.01, 0.0, 0.02, 0.0];
            for k in 0..1000 {
                let (next, done) = cartpole_step(s, k % 2, &p);
                s = if done { [0.01, 0.0, 0.02, 0.0] } else { next };
            }
            black_box(s)
        })
    });
}

fn value_iteration(c: &mut Criterion) {
    let scm = fixtures::two_state();
    let policy = Policy::uniform(scm.n_s, scm.n_a);
    c.bench_function("causal_value_iteration_two_state", |b| {
        b.iter(|| black_box(causal_value_iteration(&scm, &policy, 0.9, 1e-12).unwrap()))
    });
}

criterion_group!(kernels, mlp_forward_backward, gae_2048, cartpole_steps, value_iteration);
criterion_main!(kernels);
