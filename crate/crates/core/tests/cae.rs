use std::sync::OnceLock;

use crlbench_core::cae::*;
use crlbench_core::envcore::{stream_rng, TRUE_U};
use crlbench_core::envs::ConfoundedBandit;
use crlbench_core::rl::{PpoConfig, RlError};
use proptest::prelude::*;

fn short_cfg() -> CaeConfig {
    CaeConfig { ppo: PpoConfig { total_steps: 1200, rollout_steps: 600, ..PpoConfig::default() }, ..CaeConfig::default() }
}

struct Trained {
    run: ConfoundedRun,
    eval: ConfoundedEval,
}

fn trained_cae() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut env = ConfoundedBandit::new();
        let run = train_confounded(&mut env, &CaeConfig::default(), ConfoundedAlgo::Cae, 0).unwrap();
        let eval = evaluate_confounded(&mut env, &run, 500, 1_000, 0).unwrap();
        Trained { run, eval }
    })
}

#[test]
fn empty_prefix_is_the_prior() {
    let cls = ConfounderClassifier::new(3, 2, &CaeConfig::default(), &mut stream_rng(0, 1)).unwrap();
    assert_eq!(cls.infer(&[]).unwrap(), 0.5);
}

#[test]
fn inference_is_deterministic_and_matches_streaming() {
    let cls = ConfounderClassifier::new(3, 2, &CaeConfig::default(), &mut stream_rng(4, 1)).unwrap();
    let prefix = vec![(vec![1.0, 0.0, 0.3], 1, 1.0), (vec![0.0, 1.0, 0.1], 0, 0.0), (vec![1.0, 1.0, 0.9], 1, 1.0)];
    let p = cls.infer(&prefix).unwrap();
    assert_eq!(p, cls.infer(&prefix).unwrap());
    let mut s = cls.stream();
    let mut last = 0.0;
    for (o, a, r) in &prefix {
        last = s.push(&cls, o, *a, *r).unwrap();
    }
    assert_eq!(last, p);
    assert_eq!(s.steps(), 3);
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn step_features_layout() {
    assert_eq!(step_features(&[0.5, -1.0], 2, 0.25, 3), vec![0.5, -1.0, 0.0, 0.0, 1.0, 0.25]);
}

#[test]
fn advantage_has_correct_sign_with_true_conditional_value() {
    // Two-arm bandit: arm u pays 1, the other 0. Under a uniform policy the
    // value conditioned on U is 0.5, so the matching arm has advantage +0.5.
    for u in 0..2 {
        let v = 0.5;
        for arm in 0..2 {
            let q = if arm == u { 1.0 } else { 0.0 };
            let adv = causal_advantage(q, v);
            assert_eq!(adv > 0.0, arm == u);
        }
    }
    assert_eq!(causal_advantage(0.0, 0.0), 0.0);
}

#[test]
fn information_firewall_holds() {
    let mut env = ConfoundedBandit::new();
    let cfg = short_cfg();
    let standard = train_confounded(&mut env, &cfg, ConfoundedAlgo::Standard, 0).unwrap();
    assert_eq!(standard.gate.reads(TRUE_U), 0);
    let frozen = train_confounded(&mut env, &cfg, ConfoundedAlgo::Frozen, 0).unwrap();
    assert_eq!(frozen.gate.reads(TRUE_U), 0);
    // Bandit episodes are 12 steps, so each 600-step batch holds 50 episodes:
    // CAE reads U once per episode for the classifier label, the oracle once
    // per episode at reset for its inputs.
    let cae = train_confounded(&mut env, &cfg, ConfoundedAlgo::Cae, 0).unwrap();
    assert_eq!(cae.gate.reads(TRUE_U), 100);
    assert_eq!(cae.classifier_loss.len(), 2);
    let oracle = train_confounded(&mut env, &cfg, ConfoundedAlgo::Oracle, 0).unwrap();
    assert_eq!(oracle.gate.reads(TRUE_U), 100);
}

#[test]
fn runs_are_reproducible() {
    let mut env = ConfoundedBandit::new();
    let a = train_confounded(&mut env, &short_cfg(), ConfoundedAlgo::Cae, 9).unwrap();
    let b = train_confounded(&mut env, &short_cfg(), ConfoundedAlgo::Cae, 9).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.classifier_loss, b.classifier_loss);
}

#[test]
fn algo_names_round_trip() {
    for algo in [ConfoundedAlgo::Standard, ConfoundedAlgo::Cae, ConfoundedAlgo::Oracle, ConfoundedAlgo::Frozen] {
        assert_eq!(algo.as_str().parse::<ConfoundedAlgo>().unwrap(), algo);
    }
    assert!(matches!("ppo".parse::<ConfoundedAlgo>(), Err(RlError::Config(_))));
}

#[test]
fn trained_classifier_identifies_u_from_full_episodes() {
    let t = trained_cae();
    let acc = t.eval.classifier_accuracy.unwrap();
    assert!(acc >= 0.99, "episode-level accuracy {acc}");
    assert!(*t.eval.prefix_accuracy.last().unwrap() >= 0.99);
}

#[test]
fn single_hint_is_weakly_informative() {
    let t = trained_cae();
    let p = t.eval.single_hint_accuracy;
    assert!((0.58..=0.72).contains(&p), "single-hint accuracy {p}");
}

#[test]
fn prefix_accuracy_does_not_decrease() {
    let acc = &trained_cae().eval.prefix_accuracy;
    for k in 1..acc.len() {
        assert!(acc[k] >= acc[k - 1] - 0.02, "prefix {k}: {} after {}", acc[k], acc[k - 1]);
    }
}

#[test]
fn trained_cae_scores_well() {
    let t = trained_cae();
    assert!(t.eval.mean_score() >= 90.0, "score {}", t.eval.mean_score());
    assert!(t.run.curve.iter().all(|p| p.mean_return.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn classifier_output_is_a_probability(
        obs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 0..15),
        seed in 0u64..100,
    ) {
        let cls = ConfounderClassifier::new(3, 2, &CaeConfig::default(), &mut stream_rng(seed, 1)).unwrap();
        let prefix: Vec<(Vec<f64>, usize, f64)> = obs.into_iter().enumerate().map(|(i, o)| (o, i % 2, (i % 3) as f64)).collect();
        let p = cls.infer(&prefix).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }
}
