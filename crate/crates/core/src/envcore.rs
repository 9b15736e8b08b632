//! Environment protocol, trajectories, seeded streams and rollouts.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action {action} out of range for {num_actions} actions")]
    InvalidAction { action: usize, num_actions: usize },
    #[error("step called after the episode ended")]
    EpisodeDone,
    #[error("step called before reset")]
    NotReset,
    #[error("unknown environment {0:?}")]
    UnknownEnv(String),
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("info key {0:?} is not declared by this reader")]
    UndeclaredInfo(String),
    #[error("info key {0:?} missing")]
    MissingInfo(String),
    #[error("policy error: {0}")]
    Policy(String),
}

/// Side-channel values attached to a step. Privileged entries such as the
/// true confounder live here and never in the observation.
pub type Info = BTreeMap<&'static str, f64>;

pub const TRUE_U: &str = "true_u";

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: Info,
}

pub trait Environment: Send {
    fn name(&self) -> String;
    fn observation_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Start a new episode. All per-episode randomness is drawn from `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Info for the state returned by the last `reset`.
    fn reset_info(&self) -> Info {
        Info::new()
    }
    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError>;
    /// Per-episode score; defaults to the undiscounted return.
    fn score(&self, trajectory: &Trajectory) -> f64 {
        trajectory.episode_return
    }
}

/// Reads `info` on behalf of an algorithm, refusing keys it did not declare
/// and counting every read so tests can audit who looked at what.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InfoGate {
    allowed: BTreeSet<&'static str>,
    reads: BTreeMap<&'static str, u64>,
}

impl InfoGate {
    pub fn new(allowed: &[&'static str]) -> Self {
        Self { allowed: allowed.iter().copied().collect(), reads: BTreeMap::new() }
    }

    pub fn read(&mut self, info: &Info, key: &'static str) -> Result<f64, EnvError> {
        if !self.allowed.contains(key) {
            return Err(EnvError::UndeclaredInfo(key.to_string()));
        }
        let v = *info.get(key).ok_or_else(|| EnvError::MissingInfo(key.to_string()))?;
        *self.reads.entry(key).or_default() += 1;
        Ok(v)
    }

    pub fn reads(&self, key: &str) -> u64 {
        self.reads.get(key).copied().unwrap_or(0)
    }
}

/// One episode. `infos[t]` belongs to the transition that produced
/// `rewards[t]`; `initial_info` describes the reset state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub infos: Vec<Info>,
    pub initial_info: Info,
    pub episode_return: f64,
    /// Whether the episode terminated rather than hit `max_steps`.
    pub done: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Stream ids for [`stream_rng`]. Separate purposes never share draws.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const DYNAMICS: u64 = 2;
    pub const HINT: u64 = 3;
    pub const SPURIOUS: u64 = 4;
    pub const DOMAIN: u64 = 5;
    pub const POLICY: u64 = 6;
    pub const TRAIN: u64 = 7;
    pub const DATA: u64 = 8;
}

/// ChaCha8 generator for `(seed, stream)`; identical on every platform.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive an independent child seed (splitmix64 finalizer).
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps an observation to action probabilities.
pub trait Policy {
    fn action_probs(&mut self, observation: &[f64]) -> Result<Vec<f64>, EnvError>;
}

impl<F: FnMut(&[f64]) -> Vec<f64>> Policy for F {
    fn action_probs(&mut self, observation: &[f64]) -> Result<Vec<f64>, EnvError> {
        Ok(self(observation))
    }
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Run one episode from `reset(seed)` until done or `max_steps`.
pub fn rollout<E, P, R>(env: &mut E, policy: &mut P, max_steps: usize, seed: u64, rng: &mut R) -> Result<Trajectory, EnvError>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    let mut obs = env.reset(seed);
    let mut traj = Trajectory { initial_info: env.reset_info(), ..Default::default() };
    for _ in 0..max_steps {
        let probs = policy.action_probs(&obs)?;
        if probs.len() != env.num_actions() {
            return Err(EnvError::Policy(format!("{} probabilities for {} actions", probs.len(), env.num_actions())));
        }
        let action = sample_categorical(&probs, rng);
        let step = env.step(action)?;
        traj.observations.push(std::mem::replace(&mut obs, step.observation));
        traj.actions.push(action);
        traj.rewards.push(step.reward);
        traj.infos.push(step.info);
        if step.done {
            traj.done = true;
            break;
        }
    }
    traj.episode_return = traj.rewards.iter().sum();
    Ok(traj)
}
