use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::advantage::{gae, normalize};
use super::RlError;
use crate::envcore::{sample_categorical, split_seed, stream_rng, streams, Environment, InfoGate};
use crate::numcore::{softmax_in_place, Activation, AdamState, Graph, Mlp, MlpSpec, OutputActivation, ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Minibatch size for gradient steps.
    pub batch_size: usize,
    pub epochs_per_iter: usize,
    pub rollout_steps: usize,
    pub total_steps: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub max_episode_steps: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            batch_size: 64,
            epochs_per_iter: 4,
            rollout_steps: 2048,
            total_steps: 50_000,
            learning_rate: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            max_episode_steps: 500,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let ok = self.clip_epsilon > 0.0
            && self.clip_epsilon < 1.0
            && (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.gae_lambda)
            && self.batch_size > 0
            && self.rollout_steps > 0
            && self.epochs_per_iter > 0
            && self.learning_rate > 0.0;
        if ok {
            Ok(())
        } else {
            Err(RlError::Config(format!("invalid PPO config {self:?}")))
        }
    }
}

/// Observation indices an algorithm is allowed to see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub kept: Vec<usize>,
}

impl FeatureMask {
    pub fn all(dim: usize) -> Self {
        Self { kept: (0..dim).collect() }
    }

    /// The four physical CartPole coordinates.
    pub fn core() -> Self {
        Self { kept: (0..4).collect() }
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn validate(&self, obs_dim: usize) -> Result<(), RlError> {
        if self.kept.is_empty() || self.kept.iter().any(|&i| i >= obs_dim) {
            return Err(RlError::Config(format!("mask {:?} invalid for {obs_dim} dims", self.kept)));
        }
        Ok(())
    }

    pub fn apply(&self, obs: &[f64]) -> Vec<f64> {
        self.kept.iter().map(|&i| obs[i]).collect()
    }
}

/// Categorical policy and state-value networks sharing one parameter set.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub params: ParamSet,
    pub policy: Mlp,
    pub value: Mlp,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, num_actions: usize, hidden: &[usize], rng: &mut R) -> Result<Self, RlError> {
        let sizes = |out: usize| std::iter::once(input_dim).chain(hidden.iter().copied()).chain([out]).collect();
        let mut params = ParamSet::new();
        let policy = Mlp::new(MlpSpec::new(sizes(num_actions), Activation::Tanh, OutputActivation::Identity), &mut params, "pi", rng)?;
        let value = Mlp::new(MlpSpec::new(sizes(1), Activation::Tanh, OutputActivation::Identity), &mut params, "v", rng)?;
        Ok(Self { params, policy, value })
    }

    pub fn input_dim(&self) -> usize {
        self.policy.spec().input_size()
    }

    pub fn num_actions(&self) -> usize {
        self.policy.spec().output_size()
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>, RlError> {
        let mut logits = self.policy.forward_plain(&self.params, x)?;
        softmax_in_place(&mut logits);
        Ok(logits)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, RlError> {
        Ok(self.value.forward_plain(&self.params, x)?[0])
    }

    pub fn greedy(&self, x: &[f64]) -> Result<usize, RlError> {
        let logits = self.policy.forward_plain(&self.params, x)?;
        Ok(argmax(&logits))
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Flattened rollout ready for a PPO update. Policy and value inputs are
/// kept separate so they can be conditioned on different features.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PpoBatch {
    pub policy_inputs: Vec<Vec<f64>>,
    pub value_inputs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

fn rows_tensor(rows: &[&Vec<f64>]) -> Tensor {
    let cols = rows[0].len();
    Tensor::new(vec![rows.len(), cols], rows.iter().flat_map(|r| r.iter().copied()).collect()).expect("uniform rows")
}

/// Clipped-surrogate epochs over shuffled minibatches with per-minibatch
/// advantage normalization and global gradient clipping.
pub fn ppo_update<R: Rng + ?Sized>(
    ac: &mut ActorCritic,
    adam: &mut AdamState,
    batch: &PpoBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, RlError> {
    let n = batch.len();
    if n == 0 {
        return Ok(UpdateStats::default());
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs_per_iter {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let m = chunk.len() as f64;
            let mut adv: Vec<f64> = chunk.iter().map(|&i| batch.advantages[i]).collect();
            normalize(&mut adv);
            let mut g = Graph::new();
            let px = g.constant(rows_tensor(&chunk.iter().map(|&i| &batch.policy_inputs[i]).collect::<Vec<_>>()));
            let vx = g.constant(rows_tensor(&chunk.iter().map(|&i| &batch.value_inputs[i]).collect::<Vec<_>>()));
            let col = |v: Vec<f64>| Tensor::new(vec![chunk.len(), 1], v).expect("column");
            let adv_c = g.constant(col(adv));
            let old_c = g.constant(col(chunk.iter().map(|&i| batch.old_log_probs[i]).collect()));
            let ret_c = g.constant(col(chunk.iter().map(|&i| batch.returns[i]).collect()));
            let actions: Vec<usize> = chunk.iter().map(|&i| batch.actions[i]).collect();

            let logits = ac.policy.forward(&mut g, &ac.params, px)?;
            let logp_all = g.log_softmax_rows(logits);
            let logp = g.pick(logp_all, &actions);
            let diff = g.sub(logp, old_c);
            let ratio = g.exp(diff);
            let s1 = g.mul(ratio, adv_c);
            let clipped = g.clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
            let s2 = g.mul(clipped, adv_c);
            let surr = g.minimum(s1, s2);
            let surr_mean = g.mean(surr);
            let pi_loss = g.scale(surr_mean, -1.0);

            let probs = g.exp(logp_all);
            let plogp = g.mul(probs, logp_all);
            let ent_sum = g.sum(plogp);
            let entropy = g.scale(ent_sum, -1.0 / m);

            let v = ac.value.forward(&mut g, &ac.params, vx)?;
            let verr = g.sub(v, ret_c);
            let vsq = g.square(verr);
            let v_loss = g.mean(vsq);

            let vl = g.scale(v_loss, cfg.value_coef);
            let el = g.scale(entropy, -cfg.entropy_coef);
            let total = g.add(pi_loss, vl);
            let total = g.add(total, el);
            if !g.scalar(total).is_finite() {
                return Err(RlError::Diverged("non-finite PPO loss".into()));
            }
            ac.params.zero_grad();
            g.backward_into(total, &mut ac.params)?;
            if cfg.max_grad_norm > 0.0 {
                ac.params.clip_grad_norm(cfg.max_grad_norm);
            }
            adam.step(&mut ac.params)?;
            stats.policy_loss += g.scalar(pi_loss);
            stats.value_loss += g.scalar(v_loss);
            stats.entropy += g.scalar(entropy);
            count += 1.0;
        }
    }
    stats.policy_loss /= count;
    stats.value_loss /= count;
    stats.entropy /= count;
    Ok(stats)
}

/// Mean episode return reported after each PPO iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean_return: f64,
}

#[derive(Debug, Clone)]
pub struct PpoRun {
    pub model: ActorCritic,
    pub mask: FeatureMask,
    pub curve: Vec<CurvePoint>,
    pub gate: InfoGate,
}

/// Train a categorical policy on the masked observation. StandardPPO is the
/// all-dims mask; CausalPPO keeps only the core coordinates.
pub fn train_ppo(env: &mut dyn Environment, cfg: &PpoConfig, mask: &FeatureMask, seed: u64) -> Result<PpoRun, RlError> {
    cfg.validate()?;
    mask.validate(env.observation_dim())?;
    let mut init_rng = stream_rng(seed, streams::TRAIN);
    let mut ac = ActorCritic::new(mask.len(), env.num_actions(), &cfg.hidden, &mut init_rng)?;
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut act_rng = stream_rng(seed, streams::POLICY);
    let mut shuffle_rng = stream_rng(split_seed(seed, 1), streams::TRAIN);
    let gate = InfoGate::new(&[]);

    let mut episode = 0u64;
    let mut obs = mask.apply(&env.reset(split_seed(seed, episode)));
    let mut ep_len = 0usize;
    let mut ep_ret = 0.0;
    let mut steps = 0usize;
    let mut curve = Vec::new();
    let mut last_mean = 0.0;

    while steps < cfg.total_steps {
        let horizon = cfg.rollout_steps.min(cfg.total_steps - steps);
        let mut inputs = Vec::with_capacity(horizon);
        let (mut actions, mut logps, mut rewards, mut dones, mut values) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut finished = Vec::new();
        for _ in 0..horizon {
            let probs = ac.probs(&obs)?;
            let a = sample_categorical(&probs, &mut act_rng);
            values.push(ac.value(&obs)?);
            logps.push(probs[a].max(1e-300).ln());
            let step = env.step(a)?;
            ep_len += 1;
            ep_ret += step.reward;
            let done = step.done || ep_len >= cfg.max_episode_steps;
            inputs.push(std::mem::replace(&mut obs, mask.apply(&step.observation)));
            actions.push(a);
            rewards.push(step.reward);
            dones.push(done);
            if done {
                finished.push(ep_ret);
                episode += 1;
                obs = mask.apply(&env.reset(split_seed(seed, episode)));
                ep_len = 0;
                ep_ret = 0.0;
            }
        }
        steps += horizon;
        values.push(ac.value(&obs)?);
        let (advantages, returns) = gae(&rewards, &values, &dones, cfg.gamma, cfg.gae_lambda)?;
        let batch = PpoBatch {
            value_inputs: inputs.clone(),
            policy_inputs: inputs,
            actions,
            old_log_probs: logps,
            advantages,
            returns,
        };
        ppo_update(&mut ac, &mut adam, &batch, cfg, &mut shuffle_rng)?;
        if !finished.is_empty() {
            last_mean = finished.iter().sum::<f64>() / finished.len() as f64;
        }
        curve.push(CurvePoint { step: steps, mean_return: last_mean });
    }
    Ok(PpoRun { model: ac, mask: mask.clone(), curve, gate })
}

/// Greedy-action scores over `episodes` fresh episodes seeded from `seed`.
pub fn evaluate(
    env: &mut dyn Environment,
    model: &ActorCritic,
    mask: &FeatureMask,
    episodes: usize,
    max_steps: usize,
    seed: u64,
) -> Result<Vec<f64>, RlError> {
    let mut scores = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut obs = env.reset(split_seed(seed, ep as u64));
        let mut traj = crate::envcore::Trajectory::default();
        for _ in 0..max_steps {
            let a = model.greedy(&mask.apply(&obs))?;
            let step = env.step(a)?;
            traj.actions.push(a);
            traj.rewards.push(step.reward);
            obs = step.observation;
            if step.done {
                traj.done = true;
                break;
            }
        }
        traj.episode_return = traj.rewards.iter().sum();
        scores.push(env.score(&traj));
    }
    Ok(scores)
}
