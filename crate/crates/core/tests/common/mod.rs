//! Shared finite-difference helpers for integration tests.
#![allow(dead_code)]

use crlbench_core::numcore::{
    Activation, Graph, Gru, GruSpec, Mlp, MlpSpec, OutputActivation, ParamSet, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

/// Max relative error between autodiff parameter gradients and central
/// differences of `loss_fn`.
pub fn param_gradcheck(params: &mut ParamSet, loss_fn: &dyn Fn(&ParamSet, &mut Graph) -> crlbench_core::numcore::Var) -> f64 {
    params.zero_grad();
    let mut g = Graph::new();
    let loss = loss_fn(params, &mut g);
    g.backward_into(loss, params).unwrap();
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad.clone()).collect();
    let mut worst: f64 = 0.0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let eval = |ps: &ParamSet| {
                let mut g = Graph::new();
                let l = loss_fn(ps, &mut g);
                g.scalar(l)
            };
            let orig = params.iter().nth(pi).unwrap().value.data()[j];
            params.iter_mut().nth(pi).unwrap().value.data_mut()[j] = orig + H;
            let up = eval(params);
            params.iter_mut().nth(pi).unwrap().value.data_mut()[j] = orig - H;
            let down = eval(params);
            params.iter_mut().nth(pi).unwrap().value.data_mut()[j] = orig;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * H)));
        }
    }
    worst
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn mlp_case(seed: u64, out_act: OutputActivation) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    let spec = MlpSpec::new(vec![3, 5, 4, 2], Activation::Tanh, out_act);
    let mlp = Mlp::new(spec, &mut ps, "mlp", &mut rng).unwrap();
    // Nonzero biases so every parameter has a generic gradient.
    for p in ps.iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let x = random_tensor(&mut rng, &[3, 3]);
    let c = random_tensor(&mut rng, &[3, 2]);
    param_gradcheck(&mut ps, &|ps, g| {
        let xi = g.constant(x.clone());
        let ci = g.constant(c.clone());
        let y = mlp.forward(g, ps, xi).unwrap();
        let yc = g.mul(y, ci);
        g.sum(yc)
    })
}

pub fn gru_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    let gru = Gru::new(GruSpec { input_size: 2, hidden_size: 3, num_layers: 2 }, &mut ps, "gru", &mut rng).unwrap();
    let seq = random_tensor(&mut rng, &[3, 2]);
    let c = random_tensor(&mut rng, &[1, 3]);
    param_gradcheck(&mut ps, &|ps, g| {
        let h = gru.forward_sequence(g, ps, &seq).unwrap();
        let ci = g.constant(c.clone());
        let hc = g.mul(h, ci);
        g.sum(hc)
    })
}
