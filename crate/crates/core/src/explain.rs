//! Learned CartPole dynamics with gradient attribution, counterfactual
//! next-state queries and an explanation-stability check.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envcore::{sample_categorical, split_seed, stream_rng, streams, Environment};
use crate::envs::{cartpole_step, CartPole, CartPoleParams};
use crate::numcore::{Activation, AdamState, Graph, Mlp, MlpSpec, NumError, OutputActivation, ParamSet, Tensor};
use crate::rl::{train_a2c, A2cConfig, ActorCritic, RlError, Transition};

pub const STATE_DIM: usize = 4;
pub const NUM_ACTIONS: usize = 2;
pub const FEATURE_NAMES: [&str; STATE_DIM] = ["cart_position", "cart_velocity", "pole_angle", "pole_angular_velocity"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("invalid input: {0}")]
    Config(String),
    #[error("dynamics training diverged at epoch {0}")]
    Diverged(usize),
    #[error("attribution is identically zero")]
    ZeroAttribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub a2c: A2cConfig,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub holdout_fraction: f64,
    /// States from the trained policy's visitation used for attribution.
    pub n_attribution_states: usize,
    pub n_anchors: usize,
    pub sigma: f64,
    pub n_perturb: usize,
    pub rollout_horizon: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            a2c: A2cConfig::default(),
            hidden: vec![128, 128],
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 128,
            holdout_fraction: 0.2,
            n_attribution_states: 500,
            n_anchors: 20,
            sigma: 0.05,
            n_perturb: 50,
            rollout_horizon: 5,
        }
    }
}

/// Per-feature importance, max-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub values: Vec<f64>,
}

impl AttributionVector {
    pub fn normalize(raw: Vec<f64>) -> Result<Self, ExplainError> {
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ExplainError::Config("raw attribution must be finite and non-negative".into()));
        }
        let max = raw.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return Err(ExplainError::ZeroAttribution);
        }
        Ok(Self { values: raw.into_iter().map(|v| v / max).collect() })
    }

    /// Index of the largest importance.
    pub fn top(&self) -> usize {
        (0..self.values.len()).max_by(|&a, &b| self.values[a].total_cmp(&self.values[b])).unwrap_or(0)
    }
}

/// `f(s, a) -> s'`: an MLP on standardized state plus one-hot action that
/// predicts the standardized next state.
#[derive(Debug, Clone)]
pub struct DynamicsModel {
    pub net: Mlp,
    pub params: ParamSet,
    pub x_mean: [f64; STATE_DIM],
    pub x_std: [f64; STATE_DIM],
    pub y_mean: [f64; STATE_DIM],
    pub y_std: [f64; STATE_DIM],
}

fn moments(rows: impl Iterator<Item = [f64; STATE_DIM]>) -> ([f64; STATE_DIM], [f64; STATE_DIM]) {
    let rows: Vec<[f64; STATE_DIM]> = rows.collect();
    let n = rows.len() as f64;
    let mut mean = [0.0; STATE_DIM];
    let mut std = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        mean[i] = rows.iter().map(|r| r[i]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / n;
        // A constant column keeps unit scale rather than dividing by zero.
        std[i] = if var > 1e-24 { var.sqrt() } else { 1.0 };
    }
    (mean, std)
}

fn state_array(v: &[f64]) -> Result<[f64; STATE_DIM], ExplainError> {
    v.try_into().map_err(|_| ExplainError::Config(format!("state must have {STATE_DIM} entries, got {}", v.len())))
}

impl DynamicsModel {
    fn encode(&self, s: &[f64; STATE_DIM], a: usize) -> [f64; STATE_DIM + NUM_ACTIONS] {
        let mut x = [0.0; STATE_DIM + NUM_ACTIONS];
        for i in 0..STATE_DIM {
            x[i] = (s[i] - self.x_mean[i]) / self.x_std[i];
        }
        x[STATE_DIM + a] = 1.0;
        x
    }

    pub fn predict(&self, s: &[f64], a: usize) -> Result<[f64; STATE_DIM], ExplainError> {
        if a >= NUM_ACTIONS {
            return Err(ExplainError::Config(format!("action {a} out of range")));
        }
        let out = self.net.forward_plain(&self.params, &self.encode(&state_array(s)?, a))?;
        Ok(std::array::from_fn(|j| out[j] * self.y_std[j] + self.y_mean[j]))
    }

    /// `∂s'_j / ∂s_i` in state units for every `(s, a)` pair, as
    /// `[pair][j][i]`. One backward pass per output dimension.
    pub fn jacobians(&self, pairs: &[([f64; STATE_DIM], usize)]) -> Result<Vec<[[f64; STATE_DIM]; STATE_DIM]>, ExplainError> {
        let width = STATE_DIM + NUM_ACTIONS;
        let mut g = Graph::new();
        let data = pairs.iter().flat_map(|(s, a)| self.encode(s, *a)).collect();
        let x = g.input(Tensor::new(vec![pairs.len(), width], data)?);
        let y = self.net.forward(&mut g, &self.params, x)?;
        let mut out = vec![[[0.0; STATE_DIM]; STATE_DIM]; pairs.len()];
        for j in 0..STATE_DIM {
            let col = g.slice_cols(y, j, j + 1);
            let total = g.sum(col);
            let grads = g.backward(total)?;
            let dx = grads.wrt(x).ok_or_else(|| ExplainError::Config("input has no gradient".into()))?;
            for (k, jac) in out.iter_mut().enumerate() {
                for i in 0..STATE_DIM {
                    jac[j][i] = self.y_std[j] * dx[k * width + i] / self.x_std[i];
                }
            }
        }
        Ok(out)
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Per-dimension Pearson correlation between predicted and logged next states.
pub fn prediction_correlation(model: &DynamicsModel, data: &[Transition]) -> Result<[f64; STATE_DIM], ExplainError> {
    if data.len() < 2 {
        return Err(ExplainError::Config("need at least two transitions".into()));
    }
    let preds = data.iter().map(|t| model.predict(&t.state, t.action)).collect::<Result<Vec<_>, _>>()?;
    Ok(std::array::from_fn(|j| {
        let p: Vec<f64> = preds.iter().map(|p| p[j]).collect();
        let y: Vec<f64> = data.iter().map(|t| t.next_state[j]).collect();
        pearson(&p, &y)
    }))
}

/// Fit `‖f(s, a) − s'‖²` by Adam on shuffled minibatches.
pub fn train_dynamics(transitions: &[Transition], cfg: &ExplainConfig, seed: u64) -> Result<DynamicsModel, ExplainError> {
    if transitions.is_empty() {
        return Err(ExplainError::Config("no transitions".into()));
    }
    if cfg.batch_size == 0 || cfg.learning_rate <= 0.0 {
        return Err(ExplainError::Config("batch size and learning rate must be positive".into()));
    }
    for t in transitions {
        if t.state.len() != STATE_DIM || t.next_state.len() != STATE_DIM || t.action >= NUM_ACTIONS {
            return Err(ExplainError::Config("transition shape does not match CartPole".into()));
        }
        if t.state.iter().chain(&t.next_state).any(|v| !v.is_finite()) {
            return Err(ExplainError::Config("non-finite transition".into()));
        }
    }
    let (x_mean, x_std) = moments(transitions.iter().map(|t| state_array(&t.state).unwrap()));
    let (y_mean, y_std) = moments(transitions.iter().map(|t| state_array(&t.next_state).unwrap()));
    let mut sizes = vec![STATE_DIM + NUM_ACTIONS];
    sizes.extend(&cfg.hidden);
    sizes.push(STATE_DIM);
    let mut params = ParamSet::new();
    let mut init_rng = stream_rng(split_seed(seed, 1), streams::TRAIN);
    let net = Mlp::new(MlpSpec::new(sizes, Activation::Tanh, OutputActivation::Identity), &mut params, "dynamics", &mut init_rng)?;
    let mut model = DynamicsModel { net, params, x_mean, x_std, y_mean, y_std };

    let xs: Vec<f64> = transitions.iter().flat_map(|t| model.encode(&state_array(&t.state).unwrap(), t.action)).collect();
    let ys: Vec<f64> = transitions
        .iter()
        .flat_map(|t| (0..STATE_DIM).map(move |j| (t.next_state[j] - y_mean[j]) / y_std[j]))
        .collect();
    let width = STATE_DIM + NUM_ACTIONS;
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut rng = stream_rng(split_seed(seed, 2), streams::TRAIN);
    let mut order: Vec<usize> = (0..transitions.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let xb = chunk.iter().flat_map(|&i| xs[i * width..(i + 1) * width].iter().copied()).collect();
            let yb = chunk.iter().flat_map(|&i| ys[i * STATE_DIM..(i + 1) * STATE_DIM].iter().copied()).collect();
            let x = g.constant(Tensor::new(vec![chunk.len(), width], xb)?);
            let y = g.constant(Tensor::new(vec![chunk.len(), STATE_DIM], yb)?);
            let p = model.net.forward(&mut g, &model.params, x)?;
            let e = g.sub(p, y);
            let sq = g.square(e);
            let loss = g.mean(sq);
            if !g.scalar(loss).is_finite() {
                return Err(ExplainError::Diverged(epoch));
            }
            model.params.zero_grad();
            g.backward_into(loss, &mut model.params)?;
            adam.step(&mut model.params)?;
        }
    }
    Ok(model)
}

/// Mean over states, both actions and output dimensions of `|∂s'/∂s_i|`,
/// max-normalized.
pub fn feature_importance(model: &DynamicsModel, states: &[Vec<f64>]) -> Result<AttributionVector, ExplainError> {
    if states.is_empty() {
        return Err(ExplainError::Config("no states to attribute over".into()));
    }
    let mut pairs = Vec::with_capacity(states.len() * NUM_ACTIONS);
    for s in states {
        let s = state_array(s)?;
        for a in 0..NUM_ACTIONS {
            pairs.push((s, a));
        }
    }
    let mut raw = vec![0.0; STATE_DIM];
    for jac in model.jacobians(&pairs)? {
        for row in jac {
            for (acc, d) in raw.iter_mut().zip(row) {
                *acc += d.abs();
            }
        }
    }
    AttributionVector::normalize(raw)
}

/// Predicted next state had action `a_alt` been taken in `s`.
pub fn counterfactual_next(model: &DynamicsModel, s: &[f64], a_alt: usize) -> Result<[f64; STATE_DIM], ExplainError> {
    model.predict(s, a_alt)
}

fn check_stability_args(anchors: &[Vec<f64>], sigma: f64, n_perturb: usize) -> Result<(), ExplainError> {
    if anchors.is_empty() {
        return Err(ExplainError::Config("no anchor states".into()));
    }
    if !(sigma > 0.0) || n_perturb < 20 {
        return Err(ExplainError::Config(format!("need σ > 0 and n_perturb ≥ 20, got σ = {sigma}, n = {n_perturb}")));
    }
    Ok(())
}

fn mean_feature_variance(vectors: &[Vec<f64>]) -> f64 {
    let n = vectors.len() as f64;
    let d = vectors[0].len();
    (0..d)
        .map(|i| {
            // Shifted by the first vector so a constant column is exactly 0.
            let shift = vectors[0][i];
            let m = vectors.iter().map(|v| v[i] - shift).sum::<f64>() / n;
            vectors.iter().map(|v| (v[i] - shift - m).powi(2)).sum::<f64>() / n
        })
        .sum::<f64>()
        / d as f64
}

/// Mean over anchors of the per-feature variance of `attribution` across
/// `n_perturb` states drawn from `N(s0, σ² I)`.
pub fn stability_of<F>(attribution: F, anchors: &[Vec<f64>], sigma: f64, n_perturb: usize, seed: u64) -> Result<f64, ExplainError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, ExplainError>,
{
    check_stability_args(anchors, sigma, n_perturb)?;
    let mut rng = stream_rng(seed, streams::DATA);
    let mut total = 0.0;
    for s0 in anchors {
        let mut vectors = Vec::with_capacity(n_perturb);
        for _ in 0..n_perturb {
            let s: Vec<f64> = s0.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
            vectors.push(attribution(&s)?);
        }
        total += mean_feature_variance(&vectors);
    }
    Ok(total / anchors.len() as f64)
}

/// Stability of the model's single-state attribution.
pub fn stability(model: &DynamicsModel, anchors: &[Vec<f64>], sigma: f64, n_perturb: usize, seed: u64) -> Result<f64, ExplainError> {
    stability_of(|s| Ok(feature_importance(model, &[s.to_vec()])?.values), anchors, sigma, n_perturb, seed)
}

/// Same measurement for an uninformed attributor that draws a flat
/// Dirichlet vector per perturbed state and max-normalizes it.
pub fn random_baseline(anchors: &[Vec<f64>], sigma: f64, n_perturb: usize, seed: u64) -> Result<f64, ExplainError> {
    check_stability_args(anchors, sigma, n_perturb)?;
    let rng = std::cell::RefCell::new(stream_rng(split_seed(seed, 1), streams::DATA));
    let dim = anchors[0].len();
    stability_of(
        |_| {
            let raw: Vec<f64> = (0..dim).map(|_| Exp1.sample(&mut *rng.borrow_mut())).collect();
            Ok(AttributionVector::normalize(raw)?.values)
        },
        anchors,
        sigma,
        n_perturb,
        seed,
    )
}

/// Mean Euclidean error after `horizon` open-loop model steps, over every
/// window of consecutive in-episode transitions in `data`.
pub fn open_loop_error(model: &DynamicsModel, data: &[Transition], horizon: usize) -> Result<f64, ExplainError> {
    if horizon == 0 {
        return Err(ExplainError::Config("horizon must be at least 1".into()));
    }
    let (mut total, mut count) = (0.0, 0usize);
    'windows: for start in 0..data.len().saturating_sub(horizon - 1) {
        let window = &data[start..start + horizon];
        for pair in window.windows(2) {
            if pair[0].done || pair[0].next_state != pair[1].state {
                continue 'windows;
            }
        }
        let mut s = window[0].state.clone();
        for t in window {
            s = model.predict(&s, t.action)?.to_vec();
        }
        total += dist(&s, &window[horizon - 1].next_state);
        count += 1;
    }
    if count == 0 {
        return Err(ExplainError::Config(format!("no contiguous window of length {horizon}")));
    }
    Ok(total / count as f64)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean factual and counterfactual one-step errors, the latter against the
/// simulator's next state under the other action.
pub fn counterfactual_errors(model: &DynamicsModel, data: &[Transition], params: &CartPoleParams) -> Result<(f64, f64), ExplainError> {
    if data.is_empty() {
        return Err(ExplainError::Config("no transitions".into()));
    }
    let (mut fact, mut cf) = (0.0, 0.0);
    for t in data {
        fact += dist(&model.predict(&t.state, t.action)?, &t.next_state);
        let alt = 1 - t.action;
        let (truth, _) = cartpole_step(state_array(&t.state)?, alt, params);
        cf += dist(&counterfactual_next(model, &t.state, alt)?, &truth);
    }
    let n = data.len() as f64;
    Ok((fact / n, cf / n))
}

/// `n` states drawn uniformly from fresh stochastic rollouts of `policy`.
pub fn visitation_states(policy: &ActorCritic, env: &mut dyn Environment, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, ExplainError> {
    let mut rng = stream_rng(seed, streams::POLICY);
    let mut pool = Vec::new();
    let mut episode = 0u64;
    while pool.len() < 5 * n.max(1) {
        let mut obs = env.reset(split_seed(seed, 1_000_000 + episode));
        episode += 1;
        loop {
            pool.push(obs.clone());
            let a = sample_categorical(&policy.probs(&obs)?, &mut rng);
            let out = env.step(a).map_err(RlError::from)?;
            if out.done {
                break;
            }
            obs = out.observation;
        }
    }
    pool.shuffle(&mut rng);
    pool.truncate(n);
    Ok(pool)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub importances: Vec<f64>,
    pub stability_causal: f64,
    pub stability_random: f64,
    /// Smallest held-out per-dimension correlation.
    pub dynamics_r: f64,
    pub dynamics_r_per_dim: Vec<f64>,
    pub one_step_error: f64,
    pub open_loop_error: f64,
    pub factual_error: f64,
    pub counterfactual_error: f64,
    /// Mean return of the last ten A2C episodes.
    pub a2c_final_return: f64,
}

impl ExplainReport {
    pub fn top_feature(&self) -> &str {
        let top = (0..self.importances.len()).max_by(|&a, &b| self.importances[a].total_cmp(&self.importances[b])).unwrap_or(0);
        &self.feature_names[top]
    }

    /// Relative variance reduction of the model attribution over the baseline.
    pub fn stability_reduction(&self) -> f64 {
        1.0 - self.stability_causal / self.stability_random
    }
}

/// Train A2C on standard CartPole, fit the dynamics model on its replay
/// buffer and measure attribution, counterfactual accuracy and stability.
pub fn run_explain(cfg: &ExplainConfig, seed: u64) -> Result<ExplainReport, ExplainError> {
    if !(0.0..1.0).contains(&cfg.holdout_fraction) || cfg.holdout_fraction == 0.0 {
        return Err(ExplainError::Config("holdout fraction must lie in (0, 1)".into()));
    }
    let mut env = CartPole::variant("standard").map_err(RlError::from)?;
    let run = train_a2c(&mut env, &cfg.a2c, seed)?;
    let mut order: Vec<usize> = (0..run.transitions.len()).collect();
    order.shuffle(&mut stream_rng(seed, streams::DATA));
    let n_hold = ((run.transitions.len() as f64) * cfg.holdout_fraction).round() as usize;
    let (hold_idx, train_idx) = order.split_at(n_hold);
    let pick = |idx: &[usize]| -> Vec<Transition> { idx.iter().map(|&i| run.transitions[i].clone()).collect() };
    let (train, held) = (pick(train_idx), pick(hold_idx));
    let model = train_dynamics(&train, cfg, seed)?;
    let r = prediction_correlation(&model, &held)?;

    // Open-loop windows need temporal order, so both horizons run on the
    // whole buffer.
    let one_step_error = open_loop_error(&model, &run.transitions, 1)?;
    let open_loop = open_loop_error(&model, &run.transitions, cfg.rollout_horizon)?;
    let (factual_error, counterfactual_error) = counterfactual_errors(&model, &held, &env.params)?;

    let states = visitation_states(&run.model, &mut env, cfg.n_attribution_states, seed)?;
    let importance = feature_importance(&model, &states)?;
    let anchors: Vec<Vec<f64>> = states.iter().take(cfg.n_anchors).cloned().collect();
    let stability_causal = stability(&model, &anchors, cfg.sigma, cfg.n_perturb, seed)?;
    let stability_random = random_baseline(&anchors, cfg.sigma, cfg.n_perturb, seed)?;
    let tail = &run.episode_returns[run.episode_returns.len().saturating_sub(10)..];
    Ok(ExplainReport {
        seed,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        importances: importance.values,
        stability_causal,
        stability_random,
        dynamics_r: r.iter().copied().fold(f64::INFINITY, f64::min),
        dynamics_r_per_dim: r.to_vec(),
        one_step_error,
        open_loop_error: open_loop,
        factual_error,
        counterfactual_error,
        a2c_final_return: if tail.is_empty() { 0.0 } else { tail.iter().sum::<f64>() / tail.len() as f64 },
    })
}
