//! Environments with a hidden per-episode confounder `U ∈ {0, 1}` revealed
//! only through noisy per-step hints.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envcore::{stream_rng, streams, EnvError, EnvStep, Environment, Info, Trajectory, TRUE_U};

pub const BANDIT_NOISE: f64 = 0.35;
pub const BANDIT_HARD_NOISE: f64 = 0.45;
pub const BANDIT_HORIZON: usize = 12;
pub const LAKE_HORIZON: usize = 20;

/// State shared by every confounded environment.
#[derive(Debug, Clone)]
pub struct ConfoundedEpisodeState {
    pub u: usize,
    pub hint_noise: f64,
    pub t: usize,
    pub horizon: usize,
    hints: ChaCha8Rng,
    started: bool,
    done: bool,
}

impl ConfoundedEpisodeState {
    fn new(hint_noise: f64, horizon: usize) -> Self {
        Self { u: 0, hint_noise, t: 0, horizon, hints: stream_rng(0, streams::HINT), started: false, done: false }
    }

    fn reset(&mut self, seed: u64) {
        self.u = usize::from(stream_rng(seed, streams::INIT).random_bool(0.5));
        self.hints = stream_rng(seed, streams::HINT);
        self.t = 0;
        self.started = true;
        self.done = false;
    }

    fn hint(&mut self) -> f64 {
        let flip = self.hints.random_bool(self.hint_noise);
        (if flip { 1 - self.u } else { self.u }) as f64
    }

    fn check(&self, action: usize, num_actions: usize) -> Result<(), EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        if action >= num_actions {
            return Err(EnvError::InvalidAction { action, num_actions });
        }
        Ok(())
    }

    fn info(&self) -> Info {
        let mut info = Info::new();
        info.insert(TRUE_U, self.u as f64);
        info
    }
}

/// Twelve pulls of a two-armed bandit; the arm equal to `U` pays 1.
/// Observation: `[hint, t/12]`.
#[derive(Debug, Clone)]
pub struct ConfoundedBandit {
    pub ep: ConfoundedEpisodeState,
    name: &'static str,
}

impl ConfoundedBandit {
    pub fn new() -> Self {
        Self::with_noise("confounded-bandit", BANDIT_NOISE)
    }

    pub fn hard() -> Self {
        Self::with_noise("confounded-bandit-hard", BANDIT_HARD_NOISE)
    }

    fn with_noise(name: &'static str, noise: f64) -> Self {
        Self { ep: ConfoundedEpisodeState::new(noise, BANDIT_HORIZON), name }
    }

    fn observe(&mut self) -> Vec<f64> {
        vec![self.ep.hint(), self.ep.t as f64 / self.ep.horizon as f64]
    }
}

impl Default for ConfoundedBandit {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for ConfoundedBandit {
    fn name(&self) -> String {
        self.name.to_string()
    }

    fn observation_dim(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.ep.reset(seed);
        self.observe()
    }

    fn reset_info(&self) -> Info {
        self.ep.info()
    }

    fn step(&mut self, arm: usize) -> Result<EnvStep, EnvError> {
        self.ep.check(arm, 2)?;
        let reward = f64::from(u8::from(arm == self.ep.u));
        self.ep.t += 1;
        self.ep.done = self.ep.t >= self.ep.horizon;
        Ok(EnvStep { observation: self.observe(), reward, done: self.ep.done, info: self.ep.info() })
    }

    fn score(&self, trajectory: &Trajectory) -> f64 {
        100.0 * trajectory.episode_return / self.ep.horizon as f64
    }
}

pub const LEFT: usize = 0;
pub const DOWN: usize = 1;
pub const RIGHT: usize = 2;
pub const UP: usize = 3;

/// Non-slippery 4×4 lake. The centre 2×2 block is always water, leaving a
/// ring around it; `U = 1` floods the left corridor at (2,0) and `U = 0` the
/// top-right corridor at (0,2). Observation: one-hot cell, hint, `t/20`.
#[derive(Debug, Clone)]
pub struct ConfoundedFrozenLake {
    pub ep: ConfoundedEpisodeState,
    cell: usize,
}

impl ConfoundedFrozenLake {
    pub const GOAL: usize = 15;

    pub fn new() -> Self {
        Self { ep: ConfoundedEpisodeState::new(BANDIT_NOISE, LAKE_HORIZON), cell: 0 }
    }

    pub fn is_hole(cell: usize, u: usize) -> bool {
        matches!(cell, 5 | 6 | 9 | 10) || (u == 1 && cell == 8) || (u == 0 && cell == 2)
    }

    /// Action sequence along the corridor that is dry for `u`.
    pub fn safe_path(u: usize) -> [usize; 6] {
        if u == 1 {
            [RIGHT, RIGHT, RIGHT, DOWN, DOWN, DOWN]
        } else {
            [DOWN, DOWN, DOWN, RIGHT, RIGHT, RIGHT]
        }
    }

    fn observe(&mut self) -> Vec<f64> {
        let mut obs = vec![0.0; 18];
        obs[self.cell] = 1.0;
        obs[16] = self.ep.hint();
        obs[17] = self.ep.t as f64 / self.ep.horizon as f64;
        obs
    }
}

impl Default for ConfoundedFrozenLake {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for ConfoundedFrozenLake {
    fn name(&self) -> String {
        "confounded-frozenlake".to_string()
    }

    fn observation_dim(&self) -> usize {
        18
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.ep.reset(seed);
        self.cell = 0;
        self.observe()
    }

    fn reset_info(&self) -> Info {
        self.ep.info()
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        self.ep.check(action, 4)?;
        let (r, c) = (self.cell / 4, self.cell % 4);
        let (r, c) = match action {
            LEFT => (r, c.saturating_sub(1)),
            DOWN => ((r + 1).min(3), c),
            RIGHT => (r, (c + 1).min(3)),
            _ => (r.saturating_sub(1), c),
        };
        self.cell = r * 4 + c;
        self.ep.t += 1;
        let reward = f64::from(u8::from(self.cell == Self::GOAL));
        self.ep.done =
            self.cell == Self::GOAL || Self::is_hole(self.cell, self.ep.u) || self.ep.t >= self.ep.horizon;
        let mut info = self.ep.info();
        info.insert("cell", self.cell as f64);
        Ok(EnvStep { observation: self.observe(), reward, done: self.ep.done, info })
    }

    fn score(&self, trajectory: &Trajectory) -> f64 {
        100.0 * trajectory.episode_return
    }
}

pub const STAND: usize = 0;
pub const HIT: usize = 1;

#[derive(Debug, Clone, Default, PartialEq)]
struct Hand {
    total: u32,
    aces: u32,
}

impl Hand {
    fn add(&mut self, rank: u32) {
        self.total += rank.min(10);
        self.aces += u32::from(rank == 1);
    }

    fn usable_ace(&self) -> bool {
        self.aces > 0 && self.total + 10 <= 21
    }

    fn value(&self) -> u32 {
        if self.usable_ace() {
            self.total + 10
        } else {
            self.total
        }
    }
}

/// Whether a rank (1 = ace, 11–13 = court cards) is in the high band.
pub fn is_high_rank(rank: u32) -> bool {
    rank == 1 || rank >= 7
}

/// Blackjack against an infinite deck whose bias is the confounder: `U = 0`
/// doubles the weight of ranks 2–6, `U = 1` doubles 7–K and aces. The dealer
/// stands on 17. Rewards are 1 win, 0.5 draw, 0 loss.
#[derive(Debug, Clone)]
pub struct ConfoundedBlackjack {
    pub ep: ConfoundedEpisodeState,
    cards: ChaCha8Rng,
    player: Hand,
    dealer: Hand,
    upcard: u32,
    seen: u32,
    seen_high: u32,
}

impl ConfoundedBlackjack {
    pub fn new() -> Self {
        Self {
            ep: ConfoundedEpisodeState::new(BANDIT_NOISE, usize::MAX),
            cards: stream_rng(0, streams::DYNAMICS),
            player: Hand::default(),
            dealer: Hand::default(),
            upcard: 0,
            seen: 0,
            seen_high: 0,
        }
    }

    /// Draw weights for ranks 1..=13 under bias `u`.
    pub fn rank_weights(u: usize) -> [f64; 13] {
        let mut w = [1.0; 13];
        for (i, wi) in w.iter_mut().enumerate() {
            if is_high_rank(i as u32 + 1) == (u == 1) {
                *wi = 2.0;
            }
        }
        w
    }

    fn draw(&mut self) -> u32 {
        let w = Self::rank_weights(self.ep.u);
        let mut x = self.cards.random_range(0.0..w.iter().sum::<f64>());
        for (i, wi) in w.iter().enumerate() {
            if x < *wi {
                return i as u32 + 1;
            }
            x -= wi;
        }
        13
    }

    fn see(&mut self, rank: u32) {
        self.seen += 1;
        self.seen_high += u32::from(is_high_rank(rank));
    }

    fn deal_player(&mut self) {
        let c = self.draw();
        self.player.add(c);
        self.see(c);
    }

    pub fn player_value(&self) -> u32 {
        self.player.value()
    }

    fn observe(&mut self) -> Vec<f64> {
        vec![
            self.player.value() as f64 / 21.0,
            self.upcard.min(10) as f64 / 10.0,
            f64::from(u8::from(self.player.usable_ace())),
            self.ep.hint(),
            self.seen_high as f64 / self.seen.max(1) as f64,
        ]
    }
}

impl Default for ConfoundedBlackjack {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for ConfoundedBlackjack {
    fn name(&self) -> String {
        "confounded-blackjack".to_string()
    }

    fn observation_dim(&self) -> usize {
        5
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.ep.reset(seed);
        self.cards = stream_rng(seed, streams::DYNAMICS);
        self.player = Hand::default();
        self.dealer = Hand::default();
        self.seen = 0;
        self.seen_high = 0;
        self.deal_player();
        self.deal_player();
        self.upcard = self.draw();
        self.dealer.add(self.upcard);
        self.see(self.upcard);
        let hole = self.draw();
        self.dealer.add(hole);
        self.observe()
    }

    fn reset_info(&self) -> Info {
        self.ep.info()
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        self.ep.check(action, 2)?;
        self.ep.t += 1;
        let reward = if action == HIT {
            self.deal_player();
            if self.player.value() > 21 {
                self.ep.done = true;
            }
            0.0
        } else {
            while self.dealer.value() < 17 {
                let c = self.draw();
                self.dealer.add(c);
            }
            self.ep.done = true;
            let (p, d) = (self.player.value(), self.dealer.value());
            if d > 21 || p > d {
                1.0
            } else if p == d {
                0.5
            } else {
                0.0
            }
        };
        Ok(EnvStep { observation: self.observe(), reward, done: self.ep.done, info: self.ep.info() })
    }

    fn score(&self, trajectory: &Trajectory) -> f64 {
        100.0 * trajectory.episode_return
    }
}
