use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::cartpole::{shortcut_action, CartPole};
use crate::envcore::{stream_rng, streams, EnvError, EnvStep, Environment, Info, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpuriousMode {
    Id,
    Ood,
}

impl std::str::FromStr for SpuriousMode {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, EnvError> {
        match s.to_ascii_lowercase().as_str() {
            "id" => Ok(Self::Id),
            "ood" => Ok(Self::Ood),
            _ => Err(EnvError::Config(format!("mode must be id or ood, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpuriousConfig {
    pub core_dim: usize,
    pub spurious_dim: usize,
    pub shortcut_strength: f64,
    pub num_train_domains: usize,
    pub mode: SpuriousMode,
    /// Std of the additive noise in ID mode.
    pub id_noise_std: f64,
    pub domain_patterns: Vec<Vec<f64>>,
}

impl SpuriousConfig {
    pub fn new(mode: SpuriousMode) -> Self {
        Self::with_pattern_seed(mode, 0)
    }

    /// Domain patterns are unit vectors drawn from an isotropic Gaussian.
    pub fn with_pattern_seed(mode: SpuriousMode, pattern_seed: u64) -> Self {
        let (spurious_dim, domains) = (8, 4);
        let mut rng = stream_rng(pattern_seed, streams::DOMAIN);
        let domain_patterns = (0..domains)
            .map(|_| {
                let v: Vec<f64> = (0..spurious_dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        Self {
            core_dim: 4,
            spurious_dim,
            shortcut_strength: 5.0,
            num_train_domains: domains,
            mode,
            id_noise_std: 0.1,
            domain_patterns,
        }
    }

    pub fn observation_dim(&self) -> usize {
        self.core_dim + self.spurious_dim
    }
}

/// Append the spurious block to a core observation.
pub fn augment_spurious<R: Rng + ?Sized>(
    core_obs: &[f64],
    shortcut: usize,
    cfg: &SpuriousConfig,
    domain_index: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.observation_dim());
    out.extend_from_slice(core_obs);
    match cfg.mode {
        SpuriousMode::Id => {
            let sign = 2.0 * shortcut as f64 - 1.0;
            let pattern = &cfg.domain_patterns[domain_index];
            for &p in pattern {
                let noise: f64 = rng.sample(StandardNormal);
                out.push(cfg.shortcut_strength * sign * p + cfg.id_noise_std * noise);
            }
        }
        SpuriousMode::Ood => {
            for _ in 0..cfg.spurious_dim {
                out.push(rng.sample(StandardNormal));
            }
        }
    }
    out
}

/// CartPole with eight spurious features appended. The core block and its
/// dynamics only use the episode's init stream, so ID and OOD wrappers see
/// identical core trajectories for the same seed and actions.
#[derive(Debug, Clone)]
pub struct SpuriousCartPole {
    pub inner: CartPole,
    pub cfg: SpuriousConfig,
    domain: usize,
    noise: ChaCha8Rng,
}

impl SpuriousCartPole {
    pub fn new(inner: CartPole, cfg: SpuriousConfig) -> Self {
        Self { inner, cfg, domain: 0, noise: stream_rng(0, streams::SPURIOUS) }
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    fn observe(&mut self, core: &[f64]) -> Vec<f64> {
        augment_spurious(core, shortcut_action(core), &self.cfg, self.domain, &mut self.noise)
    }

    fn info(&self, core: &[f64]) -> Info {
        let mut info = Info::new();
        info.insert("shortcut_action", shortcut_action(core) as f64);
        info.insert("domain", self.domain as f64);
        info
    }
}

impl Environment for SpuriousCartPole {
    fn name(&self) -> String {
        let mode = match self.cfg.mode {
            SpuriousMode::Id => "id",
            SpuriousMode::Ood => "ood",
        };
        format!("{}-spurious/{mode}", self.inner.name())
    }

    fn observation_dim(&self) -> usize {
        self.cfg.observation_dim()
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let core = self.inner.reset(seed);
        self.domain = stream_rng(seed, streams::DOMAIN).random_range(0..self.cfg.num_train_domains);
        self.noise = stream_rng(seed, streams::SPURIOUS);
        self.observe(&core)
    }

    fn reset_info(&self) -> Info {
        self.info(&self.inner.state())
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        let mut step = self.inner.step(action)?;
        step.info = self.info(&step.observation);
        step.observation = self.observe(&step.observation);
        Ok(step)
    }

    fn score(&self, trajectory: &Trajectory) -> f64 {
        trajectory.episode_return
    }
}
