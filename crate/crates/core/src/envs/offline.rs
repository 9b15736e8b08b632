//! Confounded contextual bandits with a continuous action in `[0, 1]`, and
//! logged datasets produced by a behavior policy that sees a biased `U`.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::envcore::{stream_rng, streams, EnvError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OfflineEnv {
    Dosage,
    Pricing,
    Targeting,
}

impl OfflineEnv {
    pub const ALL: [OfflineEnv; 3] = [Self::Dosage, Self::Pricing, Self::Targeting];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dosage => "dosage",
            Self::Pricing => "pricing",
            Self::Targeting => "targeting",
        }
    }

    pub fn optimal_action(self, u: f64) -> f64 {
        match self {
            Self::Dosage | Self::Pricing => 1.0 - u,
            Self::Targeting => u,
        }
    }

    /// Where the behavior policy's estimate of `U` collapses to when it has
    /// no access to the confounder: dosage guesses the population mean,
    /// pricing overestimates elasticity and targeting underestimates value.
    pub fn bias_anchor(self) -> f64 {
        match self {
            Self::Dosage => 0.5,
            Self::Pricing => 0.7,
            Self::Targeting => 0.25,
        }
    }

    /// The behavior policy's estimate of `U`. `strength` is how much of the
    /// true confounder reaches the behavior policy: at 0 it acts on the
    /// constant anchor, at 1 it sees `U` exactly. The error `U_b − U` is
    /// `(1 − strength)(anchor − U)`, so it correlates negatively with `U`.
    pub fn biased_estimate(self, u: f64, strength: f64) -> f64 {
        (u + (1.0 - strength) * (self.bias_anchor() - u)).clamp(0.0, 1.0)
    }
}

impl std::str::FromStr for OfflineEnv {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, EnvError> {
        match s.to_ascii_lowercase().trim_start_matches("confounded-") {
            "dosage" => Ok(Self::Dosage),
            "pricing" => Ok(Self::Pricing),
            "targeting" => Ok(Self::Targeting),
            _ => Err(EnvError::UnknownEnv(s.to_string())),
        }
    }
}

pub fn reward_fn(a: f64, a_star: f64) -> f64 {
    (1.0 - 2.0 * (a - a_star).abs()).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineEnvSpec {
    pub env: OfflineEnv,
    pub proxy_sigma: f64,
    pub confounding_strength: f64,
    pub context_dim: usize,
    pub behavior_noise: f64,
}

impl OfflineEnvSpec {
    pub fn new(env: OfflineEnv) -> Self {
        Self { env, proxy_sigma: 0.1, confounding_strength: 0.6, context_dim: 2, behavior_noise: 0.05 }
    }

    pub fn with_strength(mut self, strength: f64) -> Self {
        self.confounding_strength = strength;
        self
    }

    fn validate(&self) -> Result<(), EnvError> {
        if !(self.proxy_sigma >= 0.0 && self.behavior_noise >= 0.0 && self.confounding_strength >= 0.0) {
            return Err(EnvError::Config(format!("negative noise or strength in {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedSample {
    pub s: Vec<f64>,
    pub a: f64,
    pub r: f64,
    pub z: f64,
    /// Evaluation only.
    pub u_true: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedDataset {
    pub context_dim: usize,
    pub samples: Vec<LoggedSample>,
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

/// Context, hidden `U` and proxy for one decision.
fn draw_context<R: Rng>(spec: &OfflineEnvSpec, rng: &mut R) -> (Vec<f64>, f64, f64) {
    let s = (0..spec.context_dim).map(|_| rng.random::<f64>()).collect();
    let u: f64 = rng.random();
    let z = (u + normal(spec.proxy_sigma).sample(rng)).clamp(0.0, 1.0);
    (s, u, z)
}

pub fn gen_dataset(spec: &OfflineEnvSpec, n: usize, seed: u64) -> Result<LoggedDataset, EnvError> {
    spec.validate()?;
    if n == 0 {
        return Err(EnvError::Config("dataset size must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, streams::DATA);
    let noise = normal(spec.behavior_noise);
    let samples = (0..n)
        .map(|_| {
            let (s, u, z) = draw_context(spec, &mut rng);
            let ub = spec.env.biased_estimate(u, spec.confounding_strength);
            let a = (spec.env.optimal_action(ub) + noise.sample(&mut rng)).clamp(0.0, 1.0);
            let r = reward_fn(a, spec.env.optimal_action(u));
            LoggedSample { s, a, r, z, u_true: u }
        })
        .collect();
    Ok(LoggedDataset { context_dim: spec.context_dim, samples })
}

/// Monte Carlo value of `policy(s, z)` under fresh draws of `U`.
pub fn true_value(policy: &dyn Fn(&[f64], f64) -> f64, spec: &OfflineEnvSpec, n_eval: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, streams::POLICY);
    let total: f64 = (0..n_eval)
        .map(|_| {
            let (s, u, z) = draw_context(spec, &mut rng);
            reward_fn(policy(&s, z).clamp(0.0, 1.0), spec.env.optimal_action(u))
        })
        .sum();
    total / n_eval.max(1) as f64
}

fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

impl LoggedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `n_train` samples and the rest.
    pub fn split(&self, n_train: usize) -> (LoggedDataset, LoggedDataset) {
        let n_train = n_train.min(self.len());
        let (a, b) = self.samples.split_at(n_train);
        (
            LoggedDataset { context_dim: self.context_dim, samples: a.to_vec() },
            LoggedDataset { context_dim: self.context_dim, samples: b.to_vec() },
        )
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.context_dim).map(|i| format!("s{i}")).collect();
        header.extend(["a", "r", "z", "u_true"].map(String::from));
        out.write_record(&header)?;
        for smp in &self.samples {
            let mut row: Vec<String> = smp.s.iter().map(|&x| sig9(x)).collect();
            row.extend([smp.a, smp.r, smp.z, smp.u_true].map(sig9));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, EnvError> {
        let bad = |e: csv::Error| EnvError::Config(format!("dataset csv: {e}"));
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(bad)?.clone();
        let context_dim = header.iter().filter(|h| h.starts_with('s')).count();
        let expected: Vec<String> = (0..context_dim)
            .map(|i| format!("s{i}"))
            .chain(["a", "r", "z", "u_true"].map(String::from))
            .collect();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(EnvError::Config(format!("unexpected dataset header {header:?}")));
        }
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(bad)?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| EnvError::Config(format!("dataset value {f:?}: {e}"))))
                .collect::<Result<_, _>>()?;
            let d = context_dim;
            samples.push(LoggedSample { s: vals[..d].to_vec(), a: vals[d], r: vals[d + 1], z: vals[d + 2], u_true: vals[d + 3] });
        }
        Ok(Self { context_dim, samples })
    }
}
