//! PPO on confounded environments with the policy and value conditioned on
//! an estimate of the hidden confounder: inferred by a GRU classifier over
//! the trajectory so far (CAE), given exactly (oracle), absent (standard) or
//! pinned at 0.5 (frozen-classifier ablation).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envcore::{sample_categorical, split_seed, stream_rng, streams, Environment, InfoGate, Trajectory, TRUE_U};
use crate::numcore::{
    AdamState, Activation, Graph, Gru, GruSpec, GruState, Mlp, MlpSpec, OutputActivation, ParamSet, Tensor,
};
use crate::rl::{gae, ppo_update, ActorCritic, CurvePoint, PpoBatch, PpoConfig, RlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfoundedAlgo {
    Standard,
    Cae,
    Oracle,
    /// CAE with the classifier output fixed at 0.5.
    Frozen,
}

impl ConfoundedAlgo {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Cae => "cae",
            Self::Oracle => "oracle",
            Self::Frozen => "frozen",
        }
    }

    fn conditioned(self) -> bool {
        self != Self::Standard
    }
}

impl std::str::FromStr for ConfoundedAlgo {
    type Err = RlError;

    fn from_str(s: &str) -> Result<Self, RlError> {
        match s {
            "standard" => Ok(Self::Standard),
            "cae" => Ok(Self::Cae),
            "oracle" => Ok(Self::Oracle),
            "frozen" => Ok(Self::Frozen),
            _ => Err(RlError::Config(format!("unknown study-b algo {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaeConfig {
    pub ppo: PpoConfig,
    pub classifier_hidden: usize,
    pub classifier_layers: usize,
    pub classifier_lr: f64,
    /// Passes over each collected episode batch.
    pub classifier_epochs: usize,
    /// Episodes per classifier minibatch.
    pub classifier_batch: usize,
}

impl Default for CaeConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig { total_steps: 25_000, ..PpoConfig::default() },
            classifier_hidden: 32,
            classifier_layers: 2,
            classifier_lr: 3e-3,
            classifier_epochs: 4,
            classifier_batch: 32,
        }
    }
}

/// Per-step classifier input: observation, one-hot action, reward.
pub fn step_features(obs: &[f64], action: usize, reward: f64, num_actions: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.len() + num_actions + 1);
    x.extend_from_slice(obs);
    x.extend((0..num_actions).map(|i| f64::from(u8::from(i == action))));
    x.push(reward);
    x
}

/// GRU over `(s_t, a_t, r_t)` with a sigmoid head giving `p(U = 1 | τ)`.
#[derive(Debug, Clone)]
pub struct ConfounderClassifier {
    pub params: ParamSet,
    pub gru: Gru,
    pub head: Mlp,
    pub obs_dim: usize,
    pub num_actions: usize,
    adam: AdamState,
}

impl ConfounderClassifier {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, num_actions: usize, cfg: &CaeConfig, rng: &mut R) -> Result<Self, RlError> {
        let mut params = ParamSet::new();
        let spec = GruSpec { input_size: obs_dim + num_actions + 1, hidden_size: cfg.classifier_hidden, num_layers: cfg.classifier_layers };
        let gru = Gru::new(spec, &mut params, "cls.gru", rng)?;
        let head = Mlp::new(
            MlpSpec::new(vec![cfg.classifier_hidden, 1], Activation::Tanh, OutputActivation::Sigmoid),
            &mut params,
            "cls.head",
            rng,
        )?;
        Ok(Self { params, gru, head, obs_dim, num_actions, adam: AdamState::new(cfg.classifier_lr) })
    }

    pub fn stream(&self) -> ClassifierStream {
        ClassifierStream { state: self.gru.initial_state(), steps: 0 }
    }

    /// `p(U = 1)` after `prefix`; 0.5 for the empty prefix.
    pub fn infer(&self, prefix: &[(Vec<f64>, usize, f64)]) -> Result<f64, RlError> {
        let mut s = self.stream();
        let mut p = 0.5;
        for (o, a, r) in prefix {
            p = s.push(self, o, *a, *r)?;
        }
        Ok(p)
    }

    /// One pass of minibatch BCE steps, averaged over every prefix length of
    /// every episode. Returns the mean loss.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        episodes: &[(Trajectory, f64)],
        epochs: usize,
        batch: usize,
        rng: &mut R,
    ) -> Result<f64, RlError> {
        let mut order: Vec<usize> = (0..episodes.len()).filter(|&i| !episodes[i].0.is_empty()).collect();
        let (mut total, mut count) = (0.0, 0.0);
        for _ in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch.max(1)) {
                let eps: Vec<&(Trajectory, f64)> = chunk.iter().map(|&i| &episodes[i]).collect();
                total += self.bce_step(&eps)?;
                count += 1.0;
            }
        }
        Ok(if count > 0.0 { total / count } else { 0.0 })
    }

    fn bce_step(&mut self, eps: &[&(Trajectory, f64)]) -> Result<f64, RlError> {
        let b = eps.len();
        let t_max = eps.iter().map(|(t, _)| t.len()).max().unwrap_or(0);
        let width = self.obs_dim + self.num_actions + 1;
        let mut g = Graph::new();
        let mut steps = Vec::with_capacity(t_max);
        let mut masks = Vec::with_capacity(t_max);
        let mut mask_vals = Vec::with_capacity(t_max);
        for t in 0..t_max {
            let mut data = Vec::with_capacity(b * width);
            let mut m = Vec::with_capacity(b);
            for (traj, _) in eps {
                if t < traj.len() {
                    data.extend(step_features(&traj.observations[t], traj.actions[t], traj.rewards[t], self.num_actions));
                    m.push(1.0);
                } else {
                    data.extend(std::iter::repeat_n(0.0, width));
                    m.push(0.0);
                }
            }
            steps.push(g.constant(Tensor::new(vec![b, width], data)?));
            masks.push(g.constant(Tensor::new(vec![b, 1], m.clone())?));
            mask_vals.push(m);
        }
        let tops = self.gru.forward_steps(&mut g, &self.params, &steps, Some(&masks))?;
        let labels: Vec<f64> = eps.iter().map(|(_, u)| *u).collect();
        let y = g.constant(Tensor::new(vec![b, 1], labels.clone())?);
        let one_minus_y = g.constant(Tensor::new(vec![b, 1], labels.iter().map(|u| 1.0 - u).collect())?);
        let valid: f64 = mask_vals.iter().flatten().sum();
        let mut terms = Vec::with_capacity(t_max);
        for (t, &h) in tops.iter().enumerate() {
            let p = self.head.forward(&mut g, &self.params, h)?;
            let p = g.clamp(p, 1e-7, 1.0 - 1e-7);
            let lp = g.ln(p);
            let q = g.one_minus(p);
            let lq = g.ln(q);
            let a = g.mul(y, lp);
            let c = g.mul(one_minus_y, lq);
            let ll = g.add(a, c);
            let masked = g.mul(ll, masks[t]);
            terms.push(g.sum(masked));
        }
        let mut acc = terms[0];
        for &tm in &terms[1..] {
            acc = g.add(acc, tm);
        }
        let loss = g.scale(acc, -1.0 / valid);
        self.params.zero_grad();
        g.backward_into(loss, &mut self.params)?;
        self.adam.step(&mut self.params)?;
        Ok(g.scalar(loss))
    }
}

/// Incremental inference over a growing prefix.
#[derive(Debug, Clone)]
pub struct ClassifierStream {
    state: GruState,
    steps: usize,
}

impl ClassifierStream {
    pub fn push(&mut self, cls: &ConfounderClassifier, obs: &[f64], action: usize, reward: f64) -> Result<f64, RlError> {
        let x = step_features(obs, action, reward, cls.num_actions);
        let h = cls.gru.step_plain(&cls.params, &mut self.state, &x)?.to_vec();
        self.steps += 1;
        Ok(cls.head.forward_plain(&cls.params, &h)?[0])
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// `A(s, a, Û) = Q(s, a, Û) − V(s, Û)` for a tabular estimate.
pub fn causal_advantage(q: f64, v_conditioned: f64) -> f64 {
    q - v_conditioned
}

#[derive(Debug, Clone)]
pub struct ConfoundedRun {
    pub algo: ConfoundedAlgo,
    pub model: ActorCritic,
    pub classifier: Option<ConfounderClassifier>,
    pub curve: Vec<CurvePoint>,
    pub classifier_loss: Vec<f64>,
    pub gate: InfoGate,
}

fn with_u(obs: &[f64], u: f64) -> Vec<f64> {
    let mut x = obs.to_vec();
    x.push(u);
    x
}

/// One episode's rollout record.
struct Episode {
    traj: Trajectory,
    /// Confounder estimate used when acting at each step.
    u_used: Vec<f64>,
    u_final: f64,
    score: f64,
}

/// Play one episode. `act` picks the action from the policy input.
fn play(
    env: &mut dyn Environment,
    algo: ConfoundedAlgo,
    model: &ActorCritic,
    classifier: Option<&ConfounderClassifier>,
    gate: &mut InfoGate,
    seed: u64,
    act: &mut dyn FnMut(&[f64]) -> Result<usize, RlError>,
) -> Result<Episode, RlError> {
    let mut obs = env.reset(seed);
    let info = env.reset_info();
    let oracle_u = if algo == ConfoundedAlgo::Oracle { Some(gate.read(&info, TRUE_U)?) } else { None };
    let mut stream = classifier.map(|c| c.stream());
    let mut u_hat = 0.5;
    let mut traj = Trajectory { initial_info: info, ..Default::default() };
    let mut u_used = Vec::new();
    loop {
        let u_now = oracle_u.unwrap_or(u_hat);
        let x = if algo.conditioned() { with_u(&obs, u_now) } else { obs.clone() };
        debug_assert_eq!(x.len(), model.input_dim());
        let a = act(&x)?;
        let step = env.step(a)?;
        if let (Some(s), Some(c)) = (stream.as_mut(), classifier) {
            u_hat = s.push(c, &obs, a, step.reward)?;
        }
        traj.observations.push(std::mem::replace(&mut obs, step.observation));
        traj.actions.push(a);
        traj.rewards.push(step.reward);
        traj.infos.push(step.info);
        u_used.push(u_now);
        if step.done {
            traj.done = true;
            break;
        }
    }
    traj.episode_return = traj.rewards.iter().sum();
    let score = env.score(&traj);
    Ok(Episode { u_final: oracle_u.unwrap_or(u_hat), traj, u_used, score })
}

pub fn train_confounded(env: &mut dyn Environment, cfg: &CaeConfig, algo: ConfoundedAlgo, seed: u64) -> Result<ConfoundedRun, RlError> {
    let pc = &cfg.ppo;
    pc.validate()?;
    let obs_dim = env.observation_dim();
    let n_act = env.num_actions();
    let in_dim = obs_dim + usize::from(algo.conditioned());
    let mut init_rng = stream_rng(seed, streams::TRAIN);
    let mut model = ActorCritic::new(in_dim, n_act, &pc.hidden, &mut init_rng)?;
    let mut classifier = match algo {
        ConfoundedAlgo::Cae => Some(ConfounderClassifier::new(obs_dim, n_act, cfg, &mut init_rng)?),
        _ => None,
    };
    let mut gate = InfoGate::new(match algo {
        ConfoundedAlgo::Oracle | ConfoundedAlgo::Cae => &[TRUE_U],
        _ => &[],
    });
    let mut adam = AdamState::new(pc.learning_rate);
    let mut act_rng = stream_rng(seed, streams::POLICY);
    let mut shuffle_rng = stream_rng(split_seed(seed, 1), streams::TRAIN);
    let (mut episode, mut steps) = (0u64, 0usize);
    let (mut curve, mut classifier_loss) = (Vec::new(), Vec::new());

    while steps < pc.total_steps {
        let mut episodes = Vec::new();
        let mut batch_steps = 0;
        while batch_steps < pc.rollout_steps.min(pc.total_steps - steps) {
            let snapshot = &model;
            let mut act = |x: &[f64]| -> Result<usize, RlError> { Ok(sample_categorical(&snapshot.probs(x)?, &mut act_rng)) };
            let ep = play(env, algo, snapshot, classifier.as_ref(), &mut gate, split_seed(seed, episode), &mut act)?;
            episode += 1;
            batch_steps += ep.traj.len();
            episodes.push(ep);
        }
        steps += batch_steps;

        let mut batch = PpoBatch::default();
        for ep in &episodes {
            let t = &ep.traj;
            let mut values = Vec::with_capacity(t.len() + 1);
            for (k, o) in t.observations.iter().enumerate() {
                let pin = if algo.conditioned() { with_u(o, ep.u_used[k]) } else { o.clone() };
                let vin = if algo.conditioned() { with_u(o, ep.u_final) } else { o.clone() };
                values.push(model.value(&vin)?);
                let probs = model.probs(&pin)?;
                batch.old_log_probs.push(probs[t.actions[k]].max(1e-300).ln());
                batch.policy_inputs.push(pin);
                batch.value_inputs.push(vin);
                batch.actions.push(t.actions[k]);
            }
            values.push(0.0);
            let mut dones = vec![false; t.len()];
            *dones.last_mut().expect("non-empty episode") = true;
            let (adv, ret) = gae(&t.rewards, &values, &dones, pc.gamma, pc.gae_lambda)?;
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
        }
        ppo_update(&mut model, &mut adam, &batch, pc, &mut shuffle_rng)?;

        if let Some(cls) = classifier.as_mut() {
            let mut labelled = Vec::with_capacity(episodes.len());
            for ep in &episodes {
                labelled.push((ep.traj.clone(), gate.read(&ep.traj.initial_info, TRUE_U)?));
            }
            classifier_loss.push(cls.train(&labelled, cfg.classifier_epochs, cfg.classifier_batch, &mut shuffle_rng)?);
        }
        let mean = episodes.iter().map(|e| e.score).sum::<f64>() / episodes.len() as f64;
        curve.push(CurvePoint { step: steps, mean_return: mean });
    }
    Ok(ConfoundedRun { algo, model, classifier, curve, classifier_loss, gate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundedEval {
    pub scores: Vec<f64>,
    /// Fraction of episodes where the final estimate rounds to the true U.
    pub classifier_accuracy: Option<f64>,
    /// Accuracy after `k + 1` transitions, over episodes at least that long.
    pub prefix_accuracy: Vec<f64>,
    /// How often a single observed hint equals the true U, averaged over
    /// every step's hint.
    pub single_hint_accuracy: f64,
}

impl ConfoundedEval {
    pub fn mean_score(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

/// Greedy evaluation; the hint is the observation entry named by `hint_index`.
pub fn evaluate_confounded(
    env: &mut dyn Environment,
    run: &ConfoundedRun,
    episodes: usize,
    seed: u64,
    hint_index: usize,
) -> Result<ConfoundedEval, RlError> {
    let mut gate = InfoGate::new(&[TRUE_U]);
    let mut scores = Vec::with_capacity(episodes);
    let (mut correct, mut hint_hits, mut hints_seen) = (0.0, 0.0, 0.0);
    let (mut prefix_hits, mut prefix_n): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for ep_i in 0..episodes {
        let model = &run.model;
        let mut act = |x: &[f64]| model.greedy(x);
        let ep = play(env, run.algo, model, run.classifier.as_ref(), &mut gate, split_seed(seed, ep_i as u64), &mut act)?;
        scores.push(ep.score);
        let true_u = gate.read(&ep.traj.initial_info, TRUE_U)?;
        for obs in &ep.traj.observations {
            hint_hits += f64::from(u8::from((obs[hint_index] - true_u).abs() < 0.5));
            hints_seen += 1.0;
        }
        if let Some(cls) = &run.classifier {
            correct += f64::from(u8::from((ep.u_final - true_u).abs() < 0.5));
            let mut s = cls.stream();
            for k in 0..ep.traj.len() {
                let p = s.push(cls, &ep.traj.observations[k], ep.traj.actions[k], ep.traj.rewards[k])?;
                if prefix_hits.len() <= k {
                    prefix_hits.push(0.0);
                    prefix_n.push(0.0);
                }
                prefix_hits[k] += f64::from(u8::from((p - true_u).abs() < 0.5));
                prefix_n[k] += 1.0;
            }
        }
    }
    let n = episodes as f64;
    Ok(ConfoundedEval {
        scores,
        classifier_accuracy: run.classifier.as_ref().map(|_| correct / n),
        prefix_accuracy: prefix_hits.iter().zip(&prefix_n).map(|(h, c)| h / c).collect(),
        single_hint_accuracy: hint_hits / hints_seen,
    })
}
