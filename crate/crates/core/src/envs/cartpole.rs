use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envcore::{stream_rng, streams, EnvError, EnvStep, Environment, Info};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Plugged into the half-length slot of the classic equations.
    pub pole_length: f64,
    pub force_magnitude: f64,
    pub dt: f64,
    pub angle_threshold: f64,
    pub position_threshold: f64,
    pub max_steps: usize,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 0.5,
            force_magnitude: 10.0,
            dt: 0.02,
            angle_threshold: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            position_threshold: 2.4,
            max_steps: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CartPoleVariant {
    Standard,
    LongPole,
    HeavyPole,
}

impl CartPoleVariant {
    pub const ALL: [CartPoleVariant; 3] = [Self::Standard, Self::LongPole, Self::HeavyPole];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::LongPole => "longpole",
            Self::HeavyPole => "heavypole",
        }
    }
}

impl std::str::FromStr for CartPoleVariant {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, EnvError> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(Self::Standard),
            "longpole" => Ok(Self::LongPole),
            "heavypole" => Ok(Self::HeavyPole),
            _ => Err(EnvError::UnknownEnv(s.to_string())),
        }
    }
}

pub fn make_variant(name: &str) -> Result<CartPoleParams, EnvError> {
    let (pole_length, pole_mass) = match name.parse::<CartPoleVariant>()? {
        CartPoleVariant::Standard => (0.5, 0.1),
        CartPoleVariant::LongPole => (1.0, 0.1),
        CartPoleVariant::HeavyPole => (0.5, 0.3),
    };
    Ok(CartPoleParams { pole_length, pole_mass, ..CartPoleParams::default() })
}

/// `(ẍ, θ̈)` for state `(x, ẋ, θ, θ̇)` under a signed force.
pub fn cartpole_accelerations(state: [f64; 4], force: f64, p: &CartPoleParams) -> (f64, f64) {
    let [_, _, theta, theta_dot] = state;
    let (sin, cos) = theta.sin_cos();
    let total_mass = p.cart_mass + p.pole_mass;
    let pml = p.pole_mass * p.pole_length;
    let temp = (force + pml * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc =
        (p.gravity * sin - cos * temp) / (p.pole_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
    let x_acc = temp - pml * theta_acc * cos / total_mass;
    (x_acc, theta_acc)
}

/// One explicit-Euler step; returns the next state and whether a
/// position/angle threshold was crossed.
pub fn cartpole_step(state: [f64; 4], action: usize, p: &CartPoleParams) -> ([f64; 4], bool) {
    let force = if action == 1 { p.force_magnitude } else { -p.force_magnitude };
    let (x_acc, theta_acc) = cartpole_accelerations(state, force, p);
    let [x, x_dot, theta, theta_dot] = state;
    let next = [
        x + p.dt * x_dot,
        x_dot + p.dt * x_acc,
        theta + p.dt * theta_dot,
        theta_dot + p.dt * theta_acc,
    ];
    let failed = next[0].abs() > p.position_threshold || next[2].abs() > p.angle_threshold;
    (next, failed)
}

/// Push toward the side the pole is falling: `a = 1` iff `θ + 0.5·θ̇ > 0`.
pub fn shortcut_action(state: &[f64]) -> usize {
    usize::from(state[2] + 0.5 * state[3] > 0.0)
}

#[derive(Debug, Clone)]
pub struct CartPole {
    pub params: CartPoleParams,
    label: String,
    state: [f64; 4],
    t: usize,
    status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Fresh,
    Running,
    Done,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Self {
        Self::with_label(params, "cartpole")
    }

    pub fn variant(name: &str) -> Result<Self, EnvError> {
        Ok(Self::with_label(make_variant(name)?, &format!("cartpole:{}", name.to_ascii_lowercase())))
    }

    fn with_label(params: CartPoleParams, label: &str) -> Self {
        Self { params, label: label.to_string(), state: [0.0; 4], t: 0, status: Status::Fresh }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Overwrite the physical state mid-episode (used to replay transitions).
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.status = Status::Running;
    }
}

impl Environment for CartPole {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn observation_dim(&self) -> usize {
        4
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, streams::INIT);
        for v in &mut self.state {
            *v = rng.random_range(-0.05..0.05);
        }
        self.t = 0;
        self.status = Status::Running;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        match self.status {
            Status::Fresh => return Err(EnvError::NotReset),
            Status::Done => return Err(EnvError::EpisodeDone),
            Status::Running => {}
        }
        if action >= 2 {
            return Err(EnvError::InvalidAction { action, num_actions: 2 });
        }
        let (next, failed) = cartpole_step(self.state, action, &self.params);
        self.state = next;
        self.t += 1;
        let done = failed || self.t >= self.params.max_steps;
        if done {
            self.status = Status::Done;
        }
        Ok(EnvStep { observation: next.to_vec(), reward: 1.0, done, info: Info::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rightward_push_from_rest() {
        let (xa, ta) = cartpole_accelerations([0.0; 4], 10.0, &CartPoleParams::default());
        assert!((ta + 14.634).abs() < 1e-3, "{ta}");
        assert!((xa - 9.756).abs() < 1e-3, "{xa}");
    }

    #[test]
    fn zero_force_at_rest_is_equilibrium() {
        assert_eq!(cartpole_accelerations([0.0; 4], 0.0, &CartPoleParams::default()), (0.0, 0.0));
    }

    #[test]
    fn longer_pole_falls_slower() {
        let s = [0.0, 0.0, 0.05, 0.0];
        let (_, std) = cartpole_accelerations(s, 0.0, &make_variant("Standard").unwrap());
        let (_, long) = cartpole_accelerations(s, 0.0, &make_variant("LongPole").unwrap());
        assert!(long.abs() < std.abs());
    }

    #[test]
    fn variants_match_table() {
        let p = make_variant("LongPole").unwrap();
        assert_eq!((p.pole_length, p.pole_mass), (1.0, 0.1));
        let p = make_variant("HeavyPole").unwrap();
        assert_eq!((p.pole_length, p.pole_mass), (0.5, 0.3));
        let p = make_variant("Standard").unwrap();
        assert_eq!((p.pole_length, p.pole_mass), (0.5, 0.1));
        assert!(make_variant("ShortPole").is_err());
    }

    #[test]
    fn step_contract() {
        let mut env = CartPole::new(CartPoleParams::default());
        assert_eq!(env.step(0), Err(EnvError::NotReset));
        env.reset(1);
        assert!(matches!(env.step(2), Err(EnvError::InvalidAction { .. })));
        while !env.step(1).unwrap().done {}
        assert_eq!(env.step(1), Err(EnvError::EpisodeDone));
    }
}
