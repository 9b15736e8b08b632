use std::sync::OnceLock;

use crlbench_core::envcore::{split_seed, stream_rng, Environment};
use crlbench_core::envs::{cartpole_step, CartPole};
use crlbench_core::explain::*;
use crlbench_core::rl::Transition;
use proptest::prelude::*;
use rand::Rng;

fn small_cfg(epochs: usize) -> ExplainConfig {
    ExplainConfig { hidden: vec![64, 64], epochs, ..ExplainConfig::default() }
}

/// Synthetic transitions with `s' = W s` regardless of the action.
fn linear_data(w: &[[f64; 4]; 4], n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = stream_rng(seed, 99);
    (0..n)
        .map(|_| {
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let next = (0..4).map(|j| (0..4).map(|i| w[j][i] * s[i]).sum()).collect();
            Transition { state: s, action: rng.random_range(0..2), reward: 1.0, next_state: next, done: false }
        })
        .collect()
}

/// Random-policy CartPole transitions, episodes in order.
fn cartpole_data(n: usize, seed: u64) -> Vec<Transition> {
    let mut env = CartPole::variant("standard").unwrap();
    let mut rng = stream_rng(seed, 98);
    let mut out = Vec::with_capacity(n);
    let mut ep = 0;
    let mut obs = env.reset(split_seed(seed, ep));
    while out.len() < n {
        let a = rng.random_range(0..2);
        let step = env.step(a).unwrap();
        out.push(Transition { state: obs, action: a, reward: step.reward, next_state: step.observation.clone(), done: step.done });
        obs = step.observation;
        if step.done {
            ep += 1;
            obs = env.reset(split_seed(seed, ep));
        }
    }
    out
}

struct Fixture {
    model: DynamicsModel,
    train: Vec<Transition>,
    held: Vec<Transition>,
}

fn cartpole_model() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let data = cartpole_data(12_500, 3);
        let (train, held) = data.split_at(10_000);
        let model = train_dynamics(train, &ExplainConfig { epochs: 20, ..ExplainConfig::default() }, 3).unwrap();
        Fixture { model, train: train.to_vec(), held: held.to_vec() }
    })
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            r[idx[k]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn normalization_sets_max_to_one_and_rejects_zero() {
    let v = AttributionVector::normalize(vec![0.5, 2.0, 1.0, 0.0]).unwrap();
    assert_eq!(v.values, vec![0.25, 1.0, 0.5, 0.0]);
    assert_eq!(v.top(), 1);
    assert_eq!(AttributionVector::normalize(vec![0.0; 4]), Err(ExplainError::ZeroAttribution));
    assert!(AttributionVector::normalize(vec![1.0, -1.0]).is_err());
}

#[test]
fn linear_dynamics_ranking_matches_column_norms() {
    let w = [[0.1, -0.5, 0.9, 1.6], [-0.2, 0.7, -1.1, 1.2], [0.1, 0.4, 1.0, -1.5], [0.0, -0.6, 0.8, 1.3]];
    let model = train_dynamics(&linear_data(&w, 8000, 1), &small_cfg(25), 1).unwrap();
    let states: Vec<Vec<f64>> = linear_data(&w, 200, 2).into_iter().map(|t| t.state).collect();
    let got = feature_importance(&model, &states).unwrap();
    let col: Vec<f64> = (0..4).map(|i| (0..4).map(|j| w[j][i].abs()).sum::<f64>() / 4.0).collect();
    let max = col.iter().copied().fold(0.0, f64::max);
    assert_eq!(ranks(&got.values), ranks(&col), "importance {:?} vs column means {col:?}", got.values);
    for (g, c) in got.values.iter().zip(&col) {
        assert!((g - c / max).abs() < 0.05, "{:?} vs {col:?}", got.values);
    }
}

#[test]
fn identity_dynamics_gives_equal_importances() {
    let eye = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let model = train_dynamics(&linear_data(&eye, 8000, 4), &small_cfg(25), 4).unwrap();
    let states: Vec<Vec<f64>> = linear_data(&eye, 200, 5).into_iter().map(|t| t.state).collect();
    let got = feature_importance(&model, &states).unwrap();
    assert!(got.values.iter().copied().fold(0.0, f64::max) == 1.0);
    for v in &got.values {
        assert!((v - 1.0).abs() < 0.03, "{:?}", got.values);
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let fx = cartpole_model();
    let h = 1e-5;
    for t in fx.held.iter().take(20) {
        let s: [f64; 4] = t.state.clone().try_into().unwrap();
        for a in 0..2 {
            let jac = fx.model.jacobians(&[(s, a)]).unwrap()[0];
            let scale = jac.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..4 {
                let (mut up, mut dn) = (s, s);
                up[i] += h;
                dn[i] -= h;
                let (fu, fd) = (fx.model.predict(&up, a).unwrap(), fx.model.predict(&dn, a).unwrap());
                for j in 0..4 {
                    let fdj = (fu[j] - fd[j]) / (2.0 * h);
                    let err = (jac[j][i] - fdj).abs() / scale;
                    assert!(err < 1e-3, "d s'_{j} / d s_{i}: {} vs {fdj}", jac[j][i]);
                }
            }
        }
    }
}

#[test]
fn cartpole_model_predicts_held_out_next_states() {
    let fx = cartpole_model();
    let r = prediction_correlation(&fx.model, &fx.held).unwrap();
    assert!(r.iter().all(|&x| x >= 0.99), "{r:?}");
}

#[test]
fn shuffled_labels_destroy_correlation() {
    // Labels are permuted across the whole set, so the held-out split has no
    // state-to-next-state link left to find.
    let fx = cartpole_model();
    let mut all: Vec<Transition> = fx.train.iter().chain(&fx.held).cloned().collect();
    let mut rng = stream_rng(7, 97);
    for i in (1..all.len()).rev() {
        let j = rng.random_range(0..=i);
        let tmp = all[i].next_state.clone();
        all[i].next_state = std::mem::replace(&mut all[j].next_state, tmp);
    }
    let (train, held) = all.split_at(fx.train.len());
    let model = train_dynamics(train, &small_cfg(5), 7).unwrap();
    let r = prediction_correlation(&model, held).unwrap();
    assert!(r.iter().all(|x| x.abs() < 0.1), "{r:?}");
}

#[test]
fn open_loop_error_compounds() {
    let fx = cartpole_model();
    let one = open_loop_error(&fx.model, &fx.held, 1).unwrap();
    let five = open_loop_error(&fx.model, &fx.held, 5).unwrap();
    assert!(five > one, "5-step {five} vs 1-step {one}");
    assert!(open_loop_error(&fx.model, &fx.held, 0).is_err());
}

#[test]
fn counterfactual_with_logged_action_is_the_factual_prediction() {
    let fx = cartpole_model();
    for t in fx.held.iter().take(50) {
        assert_eq!(counterfactual_next(&fx.model, &t.state, t.action).unwrap(), fx.model.predict(&t.state, t.action).unwrap());
    }
}

#[test]
fn counterfactual_pushes_have_opposite_effects_at_upright() {
    let fx = cartpole_model();
    let params = CartPole::variant("standard").unwrap().params;
    for x_dot in [-0.2, 0.0, 0.2] {
        let s = [0.0, x_dot, 0.0, 0.0];
        let left = counterfactual_next(&fx.model, &s, 0).unwrap()[3] - s[3];
        let right = counterfactual_next(&fx.model, &s, 1).unwrap()[3] - s[3];
        let true_left = cartpole_step(s, 0, &params).0[3];
        let true_right = cartpole_step(s, 1, &params).0[3];
        assert!(left * right < 0.0, "left {left}, right {right}");
        assert_eq!(left.signum(), true_left.signum());
        assert_eq!(right.signum(), true_right.signum());
    }
}

#[test]
fn counterfactual_error_is_within_twice_factual() {
    let fx = cartpole_model();
    let params = CartPole::variant("standard").unwrap().params;
    let (fact, cf) = counterfactual_errors(&fx.model, &fx.held, &params).unwrap();
    assert!(cf < 2.0 * fact, "counterfactual {cf} vs factual {fact}");
}

#[test]
fn model_attribution_is_more_stable_than_random() {
    let fx = cartpole_model();
    let anchors: Vec<Vec<f64>> = fx.held.iter().step_by(100).take(10).map(|t| t.state.clone()).collect();
    let ours = stability(&fx.model, &anchors, 0.05, 20, 1).unwrap();
    let random = random_baseline(&anchors, 0.05, 20, 1).unwrap();
    assert!(ours >= 0.0);
    assert!(ours < 0.5 * random, "model {ours} vs random {random}");
}

#[test]
fn constant_attribution_has_zero_variance() {
    let anchors = vec![vec![0.0; 4], vec![0.1, 0.2, -0.1, 0.0]];
    let v = stability_of(|_| Ok(vec![1.0, 0.3, 0.2, 0.5]), &anchors, 0.05, 20, 0).unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn stability_arguments_are_checked() {
    let anchors = vec![vec![0.0; 4]];
    let f = |_: &[f64]| Ok(vec![1.0; 4]);
    assert!(stability_of(f, &anchors, 0.0, 50, 0).is_err());
    assert!(stability_of(f, &anchors, 0.05, 19, 0).is_err());
    assert!(stability_of(f, &[], 0.05, 50, 0).is_err());
    assert!(random_baseline(&anchors, -1.0, 50, 0).is_err());
}

#[test]
fn importance_rejects_bad_states() {
    let fx = cartpole_model();
    assert!(feature_importance(&fx.model, &[]).is_err());
    assert!(feature_importance(&fx.model, &[vec![0.0; 3]]).is_err());
    assert!(fx.model.predict(&[0.0; 4], 2).is_err());
}

#[test]
fn dynamics_training_is_reproducible() {
    let data = cartpole_data(600, 21);
    let a = train_dynamics(&data, &small_cfg(2), 5).unwrap();
    let b = train_dynamics(&data, &small_cfg(2), 5).unwrap();
    for t in data.iter().take(20) {
        assert_eq!(a.predict(&t.state, t.action).unwrap(), b.predict(&t.state, t.action).unwrap());
    }
}

#[test]
fn training_rejects_malformed_transitions() {
    let bad = Transition { state: vec![0.0; 5], action: 0, reward: 0.0, next_state: vec![0.0; 4], done: false };
    assert!(train_dynamics(&[bad], &ExplainConfig::default(), 0).is_err());
    assert!(train_dynamics(&[], &ExplainConfig::default(), 0).is_err());
}

#[test]
fn divergent_training_aborts() {
    let data = cartpole_data(512, 11);
    let cfg = ExplainConfig { learning_rate: 1e300, ..small_cfg(5) };
    assert!(matches!(train_dynamics(&data, &cfg, 0), Err(ExplainError::Diverged(_))));
}

#[test]
fn a2c_buffer_replays_and_return_trends_up() {
    use crlbench_core::rl::{train_a2c, A2cConfig};
    let cfg = A2cConfig::default();
    let mut env = CartPole::variant("standard").unwrap();
    let run = train_a2c(&mut env, &cfg, 0).unwrap();
    assert_eq!(run.transitions.len(), cfg.total_steps);
    for t in &run.transitions {
        let (next, failed) = cartpole_step(t.state.clone().try_into().unwrap(), t.action, &env.params);
        assert_eq!(next.to_vec(), t.next_state);
        if failed {
            assert!(t.done);
        }
    }
    let means: Vec<f64> = run.curve.iter().map(|p| p.mean_return).collect();
    let idx: Vec<f64> = (0..means.len()).map(|i| i as f64).collect();
    let rho = spearman(&idx, &means);
    let third = means.len() / 3;
    let first = means[..third].iter().sum::<f64>() / third as f64;
    let last = means[means.len() - third..].iter().sum::<f64>() / third as f64;
    assert!(rho >= 0.5, "rank correlation {rho}");
    assert!(last >= 2.0 * first, "first third {first}, last third {last}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_max_is_exactly_one(raw in prop::collection::vec(0.0f64..100.0, 4)) {
        prop_assume!(raw.iter().any(|&v| v > 0.0));
        let v = AttributionVector::normalize(raw).unwrap();
        prop_assert_eq!(v.values.iter().copied().fold(0.0, f64::max), 1.0);
        prop_assert!(v.values.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn stability_is_non_negative(seed in 0u64..1000, sigma in 0.01f64..1.0) {
        let anchors = vec![vec![0.1, -0.2, 0.05, 0.0], vec![0.0; 4]];
        let v = stability_of(|s| Ok(s.iter().map(|x| x.abs() + 0.01).collect()), &anchors, sigma, 20, seed).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!(random_baseline(&anchors, sigma, 20, seed).unwrap() >= 0.0);
    }
}
