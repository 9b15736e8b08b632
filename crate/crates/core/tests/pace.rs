use crlbench_core::envs::{gen_dataset, reward_fn, LoggedDataset, OfflineEnv, OfflineEnvSpec};
use crlbench_core::pace::*;
use proptest::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use std::sync::OnceLock;

fn small_cfg() -> PaceConfig {
    PaceConfig { n_train: 2_000, n_eval: 1_000, epochs: 10, n_true_value: 4_000, ..PaceConfig::default() }
}

struct Trained {
    causal: PaceModels,
    standard: PaceModels,
    eval: LoggedDataset,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let data = gen_dataset(&OfflineEnvSpec::new(OfflineEnv::Dosage), 5_000, 3).unwrap();
        let (train, eval) = data.split(4_000);
        let cfg = PaceConfig { epochs: 15, ..PaceConfig::default() };
        Trained {
            causal: train_pace(&train, ProxyUse::Causal, &cfg, 1).unwrap(),
            standard: train_pace(&train, ProxyUse::Standard, &cfg, 2).unwrap(),
            eval,
        }
    })
}

#[test]
fn empty_dataset_is_rejected() {
    let empty = LoggedDataset { context_dim: 2, samples: Vec::new() };
    assert!(train_pace(&empty, ProxyUse::Causal, &small_cfg(), 0).is_err());
}

#[test]
fn unconfounded_noiseless_logs_recover_optimal_action() {
    let spec = OfflineEnvSpec { proxy_sigma: 0.0, behavior_noise: 0.0, ..OfflineEnvSpec::new(OfflineEnv::Targeting).with_strength(1.0) };
    let data = gen_dataset(&spec, 3_000, 4).unwrap();
    let m = train_pace(&data, ProxyUse::Causal, &PaceConfig { epochs: 20, ..small_cfg() }, 5).unwrap();
    let probe = gen_dataset(&spec, 1_000, 6).unwrap();
    let mae: f64 = probe.samples.iter().map(|x| (m.act(&x.s, x.z) - OfflineEnv::Targeting.optimal_action(x.z)).abs()).sum::<f64>()
        / probe.len() as f64;
    assert!(mae < 0.05, "mae {mae}");
}

/// Clipped-Gaussian likelihood of observing `x` given mean `mu`.
fn clipped_lik(n: &Normal, x: f64, mu: f64) -> f64 {
    if x <= 0.0 {
        n.cdf(-mu)
    } else if x >= 1.0 {
        n.cdf(mu - 1.0)
    } else {
        n.pdf(x - mu)
    }
}

/// Posterior mean of the reward given a logged `(a, z)`. The uniform
/// confounder is integrated on a fine grid against both the proxy and the
/// behavior likelihood, since the logged action also carries information.
fn bayes_reward(spec: &OfflineEnvSpec, a: f64, z: f64) -> f64 {
    let proxy = Normal::new(0.0, spec.proxy_sigma).unwrap();
    let behavior = Normal::new(0.0, spec.behavior_noise).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..4_000 {
        let u = (i as f64 + 0.5) / 4_000.0;
        let mean_a = spec.env.optimal_action(spec.env.biased_estimate(u, spec.confounding_strength));
        let lik = clipped_lik(&proxy, z, u) * clipped_lik(&behavior, a, mean_a);
        num += lik * reward_fn(a, spec.env.optimal_action(u));
        den += lik;
    }
    num / den
}

fn bayes_floor(spec: &OfflineEnvSpec, eval: &LoggedDataset) -> f64 {
    eval.samples.iter().map(|x| (bayes_reward(spec, x.a, x.z) - x.r).powi(2)).sum::<f64>() / eval.len() as f64
}

fn held_out_mse(m: &PaceModels, eval: &LoggedDataset) -> f64 {
    eval.samples.iter().map(|x| (m.predict_reward(&x.s, x.a, x.z) - x.r).powi(2)).sum::<f64>() / eval.len() as f64
}

#[test]
fn reward_model_reaches_irreducible_error() {
    let t = trained();
    let floor = bayes_floor(&OfflineEnvSpec::new(OfflineEnv::Dosage), &t.eval);
    let mse = held_out_mse(&t.causal, &t.eval);
    assert!(mse >= floor - 0.002 && mse < floor + 0.008, "mse {mse} floor {floor}");
}

#[test]
fn reward_model_fits_held_out_rewards() {
    let spec = OfflineEnvSpec { proxy_sigma: 0.05, ..OfflineEnvSpec::new(OfflineEnv::Dosage) };
    let data = gen_dataset(&spec, 12_500, 8).unwrap();
    let (train, eval) = data.split(10_000);
    let m = train_pace(&train, ProxyUse::Causal, &PaceConfig { epochs: 40, ..PaceConfig::default() }, 9).unwrap();
    let mse = held_out_mse(&m, &eval);
    assert!(mse < 0.01, "mse {mse} floor {}", bayes_floor(&spec, &eval));
}

#[test]
fn causal_policy_responds_to_proxy() {
    let m = &trained().causal;
    assert!((m.act(&[0.5, 0.5], 0.1) - m.act(&[0.5, 0.5], 0.9)).abs() > 0.1);
}

#[test]
fn ope_is_deterministic_and_bounded() {
    let t = trained();
    for m in [&t.causal, &t.standard] {
        for head in [Head::Bc, Head::Greedy] {
            let a = ope_estimate(m, head, &t.eval.samples);
            assert_eq!(a, ope_estimate(m, head, &t.eval.samples));
            assert!((0.0..=1.0).contains(&a));
        }
    }
}

#[test]
fn greedy_head_stays_on_grid() {
    let m = &trained().causal;
    for z in [0.0, 0.3, 0.7, 1.0] {
        let a = m.act_greedy(&[0.2, 0.8], z);
        let k = a * 100.0;
        assert!((k - k.round()).abs() < 1e-9 && (0.0..=1.0).contains(&a));
    }
}

#[test]
fn run_is_reproducible() {
    let spec = OfflineEnvSpec::new(OfflineEnv::Pricing);
    let cfg = PaceConfig { n_train: 1_000, n_eval: 500, epochs: 3, n_true_value: 1_000, ..PaceConfig::default() };
    assert_eq!(run_pace(&spec, &cfg, 7).unwrap(), run_pace(&spec, &cfg, 7).unwrap());
}

#[test]
fn sweep_without_confounding_has_no_gap_and_bounded_values() {
    let cfg = small_cfg();
    let rows = sensitivity_sweep(&OfflineEnv::ALL, &[0.0], &[0], &cfg).unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        let gap = r.head("pace-bc").true_value - r.head("standard").true_value;
        assert!(gap.abs() < 0.05, "{:?} gap {gap}", r.env);
        for h in &r.heads {
            for v in [h.true_value, h.ope_estimate, h.ope_abs_error] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
    let csv = sweep_csv(&rows);
    assert!(csv.starts_with("strength,env,algo,true_value,ope_estimate,ope_abs_error,seed\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
}

#[test]
fn sweep_rejects_empty_strengths() {
    assert!(sensitivity_sweep(&OfflineEnv::ALL, &[], &[0], &small_cfg()).is_err());
}

#[test]
fn proxy_matters_once_behavior_sees_confounder() {
    let r = run_pace(&OfflineEnvSpec::new(OfflineEnv::Dosage).with_strength(0.8), &small_cfg(), 1).unwrap();
    assert!(r.best_causal() > r.head("standard").true_value + 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standard_models_ignore_proxy(s0 in 0.0..1.0f64, s1 in 0.0..1.0f64, a in 0.0..1.0f64, z1 in 0.0..1.0f64, z2 in 0.0..1.0f64) {
        let m = &trained().standard;
        prop_assert_eq!(m.act(&[s0, s1], z1), m.act(&[s0, s1], z2));
        prop_assert_eq!(m.predict_reward(&[s0, s1], a, z1), m.predict_reward(&[s0, s1], a, z2));
        prop_assert_eq!(m.act_greedy(&[s0, s1], z1), m.act_greedy(&[s0, s1], z2));
    }

    #[test]
    fn outputs_are_clipped(s0 in -2.0..3.0f64, a in -1.0..2.0f64, z in -1.0..2.0f64) {
        let m = &trained().causal;
        prop_assert!((0.0..=1.0).contains(&m.act(&[s0, 0.5], z)));
        prop_assert!((0.0..=1.0).contains(&m.predict_reward(&[s0, 0.5], a, z)));
    }
}
