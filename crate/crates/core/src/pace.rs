//! Offline policy learning and evaluation from confounded logs using a
//! noisy proxy of the hidden confounder, against a proxy-blind baseline.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::envcore::{split_seed, stream_rng, streams};
use crate::envs::{gen_dataset, true_value, LoggedDataset, LoggedSample, OfflineEnv, OfflineEnvSpec};
use crate::numcore::{Activation, AdamState, Graph, Mlp, MlpSpec, OutputActivation, ParamSet, Tensor};
use crate::rl::RlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PaceConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub grid_points: usize,
    /// Fresh decisions used for ground-truth policy values.
    pub n_true_value: usize,
}

impl Default for PaceConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            epochs: 15,
            batch_size: 128,
            n_train: 10_000,
            n_eval: 5_000,
            grid_points: 101,
            n_true_value: 10_000,
        }
    }
}

/// Which inputs the models may see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProxyUse {
    /// `π(s, z)`, `R(s, a, z)`.
    Causal,
    /// `π(s)`, `R(s, a)`.
    Standard,
}

#[derive(Debug, Clone)]
pub struct PaceModels {
    pub proxy: ProxyUse,
    pub params: ParamSet,
    pub policy: Mlp,
    pub reward: Mlp,
    pub grid_points: usize,
}

fn policy_input(proxy: ProxyUse, s: &[f64], z: f64) -> Vec<f64> {
    let mut x = s.to_vec();
    if proxy == ProxyUse::Causal {
        x.push(z);
    }
    x
}

fn reward_input(proxy: ProxyUse, s: &[f64], a: f64, z: f64) -> Vec<f64> {
    let mut x = s.to_vec();
    x.push(a);
    if proxy == ProxyUse::Causal {
        x.push(z);
    }
    x
}

impl PaceModels {
    /// Behavior-cloning head.
    pub fn act(&self, s: &[f64], z: f64) -> f64 {
        let x = policy_input(self.proxy, s, z);
        self.policy.forward_plain(&self.params, &x).expect("input width fixed at training")[0].clamp(0.0, 1.0)
    }

    pub fn predict_reward(&self, s: &[f64], a: f64, z: f64) -> f64 {
        let x = reward_input(self.proxy, s, a, z);
        self.reward.forward_plain(&self.params, &x).expect("input width fixed at training")[0].clamp(0.0, 1.0)
    }

    /// Reward-greedy head: best grid action under the reward model.
    pub fn act_greedy(&self, s: &[f64], z: f64) -> f64 {
        let n = self.grid_points.max(2);
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..n {
            let a = i as f64 / (n - 1) as f64;
            let r = self.predict_reward(s, a, z);
            if r > best.0 {
                best = (r, a);
            }
        }
        best.1
    }
}

fn fit(
    net: &Mlp,
    params: &mut ParamSet,
    xs: &[Vec<f64>],
    ys: &[f64],
    cfg: &PaceConfig,
    seed: u64,
) -> Result<(), RlError> {
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut rng = stream_rng(seed, streams::TRAIN);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let width = xs[0].len();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let x = g.constant(Tensor::new(vec![chunk.len(), width], chunk.iter().flat_map(|&i| xs[i].iter().copied()).collect())?);
            let y = g.constant(Tensor::new(vec![chunk.len(), 1], chunk.iter().map(|&i| ys[i]).collect())?);
            let p = net.forward(&mut g, params, x)?;
            let e = g.sub(p, y);
            let sq = g.square(e);
            let loss = g.mean(sq);
            params.zero_grad();
            g.backward_into(loss, params)?;
            adam.step(params)?;
        }
    }
    Ok(())
}

/// Fit the behavior-cloning policy and the reward model by squared error.
pub fn train_pace(data: &LoggedDataset, proxy: ProxyUse, cfg: &PaceConfig, seed: u64) -> Result<PaceModels, RlError> {
    if data.is_empty() {
        return Err(RlError::Config("empty dataset".into()));
    }
    let d = data.context_dim;
    let extra = usize::from(proxy == ProxyUse::Causal);
    let mut init = stream_rng(seed, streams::INIT);
    let mut params = ParamSet::new();
    let sizes = |inp: usize| std::iter::once(inp).chain(cfg.hidden.iter().copied()).chain([1]).collect::<Vec<_>>();
    let policy = Mlp::new(MlpSpec::new(sizes(d + extra), Activation::Tanh, OutputActivation::Sigmoid), &mut params, "pi", &mut init)?;
    let reward = Mlp::new(MlpSpec::new(sizes(d + 1 + extra), Activation::Tanh, OutputActivation::Sigmoid), &mut params, "r", &mut init)?;
    let px: Vec<Vec<f64>> = data.samples.iter().map(|s| policy_input(proxy, &s.s, s.z)).collect();
    let pa: Vec<f64> = data.samples.iter().map(|s| s.a).collect();
    fit(&policy, &mut params, &px, &pa, cfg, split_seed(seed, 1))?;
    let rx: Vec<Vec<f64>> = data.samples.iter().map(|s| reward_input(proxy, &s.s, s.a, s.z)).collect();
    let ry: Vec<f64> = data.samples.iter().map(|s| s.r).collect();
    fit(&reward, &mut params, &rx, &ry, cfg, split_seed(seed, 2))?;
    Ok(PaceModels { proxy, params, policy, reward, grid_points: cfg.grid_points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Bc,
    Greedy,
}

impl Head {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bc => "bc",
            Self::Greedy => "greedy",
        }
    }
}

impl PaceModels {
    pub fn head_action(&self, head: Head, s: &[f64], z: f64) -> f64 {
        match head {
            Head::Bc => self.act(s, z),
            Head::Greedy => self.act_greedy(s, z),
        }
    }
}

/// `mean R(s, π(s, z), z)` over the evaluation split.
pub fn ope_estimate(models: &PaceModels, head: Head, eval: &[LoggedSample]) -> f64 {
    let total: f64 = eval.iter().map(|x| models.predict_reward(&x.s, models.head_action(head, &x.s, x.z), x.z)).sum();
    total / eval.len().max(1) as f64
}

/// Ground truth and OPE for one trained head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadResult {
    pub algo: String,
    pub true_value: f64,
    pub ope_estimate: f64,
    pub ope_abs_error: f64,
}

/// Everything Study C reports for one `(env, strength, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaceResult {
    pub env: OfflineEnv,
    pub strength: f64,
    pub seed: u64,
    pub behavior_value: f64,
    pub heads: Vec<HeadResult>,
}

impl PaceResult {
    pub fn head(&self, algo: &str) -> &HeadResult {
        self.heads.iter().find(|h| h.algo == algo).expect("known head name")
    }

    /// True value of the better PACE head.
    pub fn best_causal(&self) -> f64 {
        self.head("pace-bc").true_value.max(self.head("pace-greedy").true_value)
    }
}

fn evaluate_head(name: &str, m: &PaceModels, head: Head, spec: &OfflineEnvSpec, eval: &[LoggedSample], cfg: &PaceConfig, seed: u64) -> HeadResult {
    let tv = true_value(&|s, z| m.head_action(head, s, z), spec, cfg.n_true_value, seed);
    let est = ope_estimate(m, head, eval);
    HeadResult { algo: name.to_string(), true_value: tv, ope_estimate: est, ope_abs_error: (est - tv).abs() }
}

/// Generate `n_train + n_eval` logged samples, fit both model families and
/// score every head.
pub fn run_pace(spec: &OfflineEnvSpec, cfg: &PaceConfig, seed: u64) -> Result<PaceResult, RlError> {
    let data = gen_dataset(spec, cfg.n_train + cfg.n_eval, seed)?;
    let (train, eval) = data.split(cfg.n_train);
    let causal = train_pace(&train, ProxyUse::Causal, cfg, split_seed(seed, 10))?;
    let standard = train_pace(&train, ProxyUse::Standard, cfg, split_seed(seed, 11))?;
    let tv_seed = split_seed(seed, 12);
    let heads = vec![
        evaluate_head("pace-bc", &causal, Head::Bc, spec, &eval.samples, cfg, tv_seed),
        evaluate_head("pace-greedy", &causal, Head::Greedy, spec, &eval.samples, cfg, tv_seed),
        evaluate_head("standard", &standard, Head::Bc, spec, &eval.samples, cfg, tv_seed),
    ];
    let behavior_value = train.samples.iter().map(|s| s.r).sum::<f64>() / train.len() as f64;
    Ok(PaceResult { env: spec.env, strength: spec.confounding_strength, seed, behavior_value, heads })
}

/// Every `(strength, env, seed)` combination.
pub fn sensitivity_sweep(envs: &[OfflineEnv], strengths: &[f64], seeds: &[u64], cfg: &PaceConfig) -> Result<Vec<PaceResult>, RlError> {
    if strengths.is_empty() {
        return Err(RlError::Config("no strengths".into()));
    }
    let mut out = Vec::new();
    for &strength in strengths {
        for &env in envs {
            for &seed in seeds {
                out.push(run_pace(&OfflineEnvSpec::new(env).with_strength(strength), cfg, seed)?);
            }
        }
    }
    Ok(out)
}

/// CSV table `strength,env,algo,true_value,ope_estimate,ope_abs_error,seed`.
pub fn sweep_csv(results: &[PaceResult]) -> String {
    let mut out = String::from("strength,env,algo,true_value,ope_estimate,ope_abs_error,seed\n");
    for r in results {
        for h in &r.heads {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{}\n",
                r.strength,
                r.env.as_str(),
                h.algo,
                h.true_value,
                h.ope_estimate,
                h.ope_abs_error,
                r.seed
            ));
        }
    }
    out
}
