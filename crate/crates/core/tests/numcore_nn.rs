use crlbench_core::numcore::{
    softmax_in_place, Activation, Graph, Gru, GruSpec, Mlp, MlpSpec, NumError, OutputActivation, ParamSet, Tensor,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn identity_layer_passes_input_through() {
    let mut ps = ParamSet::new();
    let mlp = Mlp::new(MlpSpec::new(vec![2, 2], Activation::Tanh, OutputActivation::Identity), &mut ps, "m", &mut rng(0)).unwrap();
    ps.get_mut(mlp.weight(0)).value = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(mlp.forward_plain(&ps, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    let mut g = Graph::new();
    let x = g.constant(Tensor::row(&[1.0, 2.0]));
    let y = mlp.forward(&mut g, &ps, x).unwrap();
    assert_eq!(g.value(y), &[1.0, 2.0]);
}

#[test]
fn zero_weights_with_sigmoid_output_give_one_half() {
    let mut ps = ParamSet::new();
    let mlp = Mlp::new(MlpSpec::new(vec![3, 4, 2], Activation::Relu, OutputActivation::Sigmoid), &mut ps, "m", &mut rng(1)).unwrap();
    for p in ps.iter_mut() {
        p.value.data_mut().fill(0.0);
    }
    assert_eq!(mlp.forward_plain(&ps, &[5.0, -3.0, 0.2]).unwrap(), vec![0.5, 0.5]);
}

#[test]
fn mlp_rejects_wrong_input_width() {
    let mut ps = ParamSet::new();
    let mlp = Mlp::new(MlpSpec::new(vec![3, 2], Activation::Tanh, OutputActivation::Identity), &mut ps, "m", &mut rng(2)).unwrap();
    assert_eq!(mlp.forward_plain(&ps, &[1.0]), Err(NumError::Dimension { expected: 3, got: 1 }));
    let mut g = Graph::new();
    let x = g.constant(Tensor::row(&[1.0, 2.0]));
    assert!(mlp.forward(&mut g, &ps, x).is_err());
}

#[test]
fn gru_zero_params_on_zero_input_stay_at_zero() {
    let mut ps = ParamSet::new();
    let gru = Gru::new(GruSpec { input_size: 3, hidden_size: 4, num_layers: 2 }, &mut ps, "g", &mut rng(3)).unwrap();
    for id in gru.param_ids() {
        ps.get_mut(id).value.data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let h = gru.forward_sequence(&mut g, &ps, &Tensor::zeros(&[1, 3])).unwrap();
    assert_eq!(g.value(h), &[0.0; 4]);
}

#[test]
fn gru_is_order_sensitive() {
    let mut ps = ParamSet::new();
    let gru = Gru::new(GruSpec { input_size: 2, hidden_size: 8, num_layers: 2 }, &mut ps, "g", &mut rng(4)).unwrap();
    let fwd = Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.5]).unwrap();
    let rev = Tensor::new(vec![3, 2], vec![-1.0, 0.5, 0.0, 1.0, 1.0, 0.0]).unwrap();
    let mut g = Graph::new();
    let a = gru.forward_sequence(&mut g, &ps, &fwd).unwrap();
    let b = gru.forward_sequence(&mut g, &ps, &rev).unwrap();
    let diff: f64 = g.value(a).iter().zip(g.value(b)).map(|(x, y)| (x - y).abs()).sum();
    assert!(diff > 1e-3, "diff {diff}");
}

#[test]
fn gru_streaming_matches_recorded_pass() {
    let mut ps = ParamSet::new();
    let gru = Gru::new(GruSpec { input_size: 2, hidden_size: 5, num_layers: 2 }, &mut ps, "g", &mut rng(5)).unwrap();
    let seq = Tensor::new(vec![4, 2], vec![0.3, -0.2, 1.0, 0.1, -0.5, 0.7, 0.0, 0.9]).unwrap();
    let mut g = Graph::new();
    let h = gru.forward_sequence(&mut g, &ps, &seq).unwrap();
    let mut state = gru.initial_state();
    for t in 0..4 {
        gru.step_plain(&ps, &mut state, seq.row_slice(t)).unwrap();
    }
    for (x, y) in g.value(h).iter().zip(state.top()) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn gru_rejects_empty_sequence() {
    let mut ps = ParamSet::new();
    let gru = Gru::new(GruSpec { input_size: 2, hidden_size: 3, num_layers: 2 }, &mut ps, "g", &mut rng(6)).unwrap();
    let mut g = Graph::new();
    assert_eq!(gru.forward_steps(&mut g, &ps, &[], None), Err(NumError::EmptySequence));
}

proptest! {
    #[test]
    fn softmax_is_a_strictly_positive_distribution(row in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let mut p = row.clone();
        softmax_in_place(&mut p);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0));
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(&row));
        let y = g.softmax_rows(x);
        prop_assert_eq!(g.value(y), &p[..]);
    }

    #[test]
    fn backward_twice_doubles_every_gradient(w in prop::collection::vec(-2.0f64..2.0, 1..6)) {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::row(&w));
        let mut g = Graph::new();
        let v = g.param(&ps, id);
        let t = g.tanh(v);
        let sq = g.square(t);
        let loss = g.sum(sq);
        g.backward_into(loss, &mut ps).unwrap();
        let once = ps.get(id).grad.clone();
        g.backward_into(loss, &mut ps).unwrap();
        for (a, b) in once.iter().zip(&ps.get(id).grad) {
            prop_assert_eq!(2.0 * a, *b);
        }
    }
}
