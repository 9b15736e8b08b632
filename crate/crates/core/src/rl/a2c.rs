use serde::{Deserialize, Serialize};

use super::ppo::{ActorCritic, CurvePoint};
use super::RlError;
use crate::envcore::{sample_categorical, split_seed, stream_rng, streams, Environment};
use crate::numcore::{AdamState, Graph, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct A2cConfig {
    pub total_steps: usize,
    /// Transitions per gradient step.
    pub update_every: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub max_episode_steps: usize,
    /// Episodes per learning-curve point.
    pub curve_window: usize,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            total_steps: 50_000,
            update_every: 32,
            gamma: 0.99,
            learning_rate: 1e-3,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            max_episode_steps: 500,
            curve_window: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct A2cRun {
    pub model: ActorCritic,
    pub transitions: Vec<Transition>,
    /// Per-episode returns in completion order.
    pub episode_returns: Vec<f64>,
    /// Mean return over consecutive windows of `curve_window` episodes.
    pub curve: Vec<CurvePoint>,
}

/// Synchronous advantage actor-critic updated on consecutive chunks of
/// `update_every` transitions with `A = G − V(s)`, `G` the chunk's n-step return.
pub fn train_a2c(env: &mut dyn Environment, cfg: &A2cConfig, seed: u64) -> Result<A2cRun, RlError> {
    if cfg.update_every == 0 || cfg.learning_rate <= 0.0 || !(0.0..=1.0).contains(&cfg.gamma) {
        return Err(RlError::Config(format!("invalid A2C config {cfg:?}")));
    }
    let dim = env.observation_dim();
    let mut ac = ActorCritic::new(dim, env.num_actions(), &cfg.hidden, &mut stream_rng(seed, streams::TRAIN))?;
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut act_rng = stream_rng(seed, streams::POLICY);
    let mut transitions = Vec::with_capacity(cfg.total_steps);
    let mut episode_returns = Vec::new();
    let mut curve = Vec::new();
    let mut episode = 0u64;
    let mut obs = env.reset(split_seed(seed, episode));
    let (mut ep_len, mut ep_ret) = (0usize, 0.0);
    let mut pending = 0usize;

    for step in 0..cfg.total_steps {
        let probs = ac.probs(&obs)?;
        let a = sample_categorical(&probs, &mut act_rng);
        let out = env.step(a)?;
        ep_len += 1;
        ep_ret += out.reward;
        let truncated = ep_len >= cfg.max_episode_steps;
        transitions.push(Transition {
            state: obs.clone(),
            action: a,
            reward: out.reward,
            next_state: out.observation.clone(),
            done: out.done,
        });
        pending += 1;
        obs = out.observation;
        if out.done || truncated {
            episode_returns.push(ep_ret);
            if episode_returns.len() % cfg.curve_window == 0 {
                let w = &episode_returns[episode_returns.len() - cfg.curve_window..];
                curve.push(CurvePoint { step: step + 1, mean_return: w.iter().sum::<f64>() / w.len() as f64 });
            }
            episode += 1;
            obs = env.reset(split_seed(seed, episode));
            ep_len = 0;
            ep_ret = 0.0;
        }
        if pending == cfg.update_every || step + 1 == cfg.total_steps {
            update(&mut ac, &mut adam, &transitions[transitions.len() - pending..], cfg)?;
            pending = 0;
        }
    }
    Ok(A2cRun { model: ac, transitions, episode_returns, curve })
}

fn update(ac: &mut ActorCritic, adam: &mut AdamState, chunk: &[Transition], cfg: &A2cConfig) -> Result<(), RlError> {
    let n = chunk.len();
    let dim = chunk[0].state.len();
    // n-step returns inside the chunk, cut at episode ends and bootstrapped
    // where the chunk or a truncated episode stops.
    let mut targets = vec![0.0; n];
    let mut ret = 0.0;
    for k in (0..n).rev() {
        let t = &chunk[k];
        let continues = k + 1 < n && !t.done && t.next_state == chunk[k + 1].state;
        ret = if t.done {
            0.0
        } else if continues {
            ret
        } else {
            ac.value(&t.next_state)?
        };
        ret = t.reward + cfg.gamma * ret;
        targets[k] = ret;
    }
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![n, dim], chunk.iter().flat_map(|t| t.state.iter().copied()).collect())?);
    let v = ac.value.forward(&mut g, &ac.params, x)?;
    let adv: Vec<f64> = g.value(v).iter().zip(&targets).map(|(v, y)| y - v).collect();
    let adv_c = g.constant(Tensor::new(vec![n, 1], adv)?);
    let tgt = g.constant(Tensor::new(vec![n, 1], targets)?);
    let logits = ac.policy.forward(&mut g, &ac.params, x)?;
    let logp_all = g.log_softmax_rows(logits);
    let actions: Vec<usize> = chunk.iter().map(|t| t.action).collect();
    let logp = g.pick(logp_all, &actions);
    let weighted = g.mul(logp, adv_c);
    let pg = g.mean(weighted);
    let pi_loss = g.scale(pg, -1.0);
    let probs = g.exp(logp_all);
    let plogp = g.mul(probs, logp_all);
    let neg_ent = g.sum(plogp);
    let ent_term = g.scale(neg_ent, cfg.entropy_coef / n as f64);
    let err = g.sub(v, tgt);
    let sq = g.square(err);
    let v_loss = g.mean(sq);
    let v_term = g.scale(v_loss, cfg.value_coef);
    let total = g.add(pi_loss, v_term);
    let total = g.add(total, ent_term);
    if !g.scalar(total).is_finite() {
        return Err(RlError::Diverged("non-finite A2C loss".into()));
    }
    ac.params.zero_grad();
    g.backward_into(total, &mut ac.params)?;
    if cfg.max_grad_norm > 0.0 {
        ac.params.clip_grad_norm(cfg.max_grad_norm);
    }
    adam.step(&mut ac.params)?;
    Ok(())
}
