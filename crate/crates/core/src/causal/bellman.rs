use rand::Rng;

use super::identify::{interventional_dynamics, observational_dynamics};
use super::scm::{Kernel, TabularScm};
use super::{CausalError, ROW_TOL};
use crate::envcore::{stream_rng, streams};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 1_000_000;

/// Stochastic tabular policy `π(a | s)`, `[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub n_s: usize,
    pub n_a: usize,
    pub probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_s: usize, n_a: usize, probs: Vec<f64>) -> Result<Self, CausalError> {
        let p = Self { n_s, n_a, probs };
        if n_a == 0 || p.probs.len() != n_s * n_a {
            return Err(CausalError::Argument(format!("policy needs {n_s}×{n_a} entries")));
        }
        for (s, row) in p.probs.chunks(n_a).enumerate() {
            if row.iter().any(|x| !(*x >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOL {
                return Err(CausalError::Argument(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(p)
    }

    pub fn uniform(n_s: usize, n_a: usize) -> Self {
        Self { n_s, n_a, probs: vec![1.0 / n_a as f64; n_s * n_a] }
    }

    pub fn deterministic(actions: &[usize], n_a: usize) -> Self {
        let mut probs = vec![0.0; actions.len() * n_a];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_a + a] = 1.0;
        }
        Self { n_s: actions.len(), n_a, probs }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_a + a]
    }
}

/// `(T^π V)(s) = Σ_a π(a | s) Σ_{s', r} P(s', r | s, a) [r + γ V(s')]`.
pub fn bellman_operator(kernel: &Kernel, policy: &Policy, gamma: f64, v: &[f64]) -> Result<Vec<f64>, CausalError> {
    if policy.n_s != kernel.n_s || policy.n_a != kernel.n_a || v.len() != kernel.n_s {
        return Err(CausalError::Argument("policy, kernel and value shapes disagree".into()));
    }
    let n_r = kernel.n_r();
    let mut out = vec![0.0; kernel.n_s];
    for (s, o) in out.iter_mut().enumerate() {
        for a in 0..kernel.n_a {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            if !kernel.is_observable(s, a) {
                return Err(CausalError::Unobservable { state: s, action: a });
            }
            let backup: f64 = kernel
                .row(s, a)
                .iter()
                .enumerate()
                .map(|(i, p)| p * (kernel.rewards[i % n_r] + gamma * v[i / n_r]))
                .sum();
            *o += pa * backup;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    pub iterations: usize,
}

/// Iterate the Bellman operator from zero until the sup-norm change drops
/// below `tol`.
pub fn value_iteration(kernel: &Kernel, policy: &Policy, gamma: f64, tol: f64) -> Result<ValueIteration, CausalError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(CausalError::Argument(format!("gamma {gamma} outside [0, 1)")));
    }
    let mut v = vec![0.0; kernel.n_s];
    for it in 1..=MAX_ITERATIONS {
        let next = bellman_operator(kernel, policy, gamma, &v)?;
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < tol {
            return Ok(ValueIteration { values: v, iterations: it });
        }
    }
    Err(CausalError::NonConvergence(MAX_ITERATIONS))
}

/// Value under the interventional kernel `P(s', r | s, do(a))`.
pub fn causal_value_iteration(scm: &TabularScm, policy: &Policy, gamma: f64, tol: f64) -> Result<ValueIteration, CausalError> {
    value_iteration(&interventional_dynamics(scm), policy, gamma, tol)
}

/// Value a naive learner would compute from the observational kernel.
pub fn associational_value_iteration(
    scm: &TabularScm,
    policy: &Policy,
    gamma: f64,
    tol: f64,
) -> Result<ValueIteration, CausalError> {
    value_iteration(&observational_dynamics(scm), policy, gamma, tol)
}

/// One-step greedy improvement against `v`; unobservable cells are skipped.
pub fn greedy_policy(kernel: &Kernel, gamma: f64, v: &[f64]) -> Policy {
    let n_r = kernel.n_r();
    let actions: Vec<usize> = (0..kernel.n_s)
        .map(|s| {
            let mut best = (f64::NEG_INFINITY, 0);
            for a in 0..kernel.n_a {
                if !kernel.is_observable(s, a) {
                    continue;
                }
                let q: f64 = kernel
                    .row(s, a)
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p * (kernel.rewards[i % n_r] + gamma * v[i / n_r]))
                    .sum();
                if q > best.0 {
                    best = (q, a);
                }
            }
            best.1
        })
        .collect();
    Policy::deterministic(&actions, kernel.n_a)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

fn draw<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if p > 0.0 {
            last = i;
        }
        if x < acc {
            return i;
        }
    }
    last
}

/// Simulate forced-action rollouts in the SCM: each step draws a fresh
/// confounder from `P(u | s)`, then the action from `π` alone, so the
/// behavior mechanism is cut. Returns the discounted return from `P(s0)`,
/// truncated once `γ^t · max|r| / (1 − γ)` falls below 1e-12.
pub fn do_rollout_value(scm: &TabularScm, policy: &Policy, gamma: f64, n_rollouts: usize, seed: u64) -> McEstimate {
    let rmax = scm.rewards.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let mut horizon = 1usize;
    let mut tail = rmax / (1.0 - gamma);
    while tail > 1e-12 && horizon < 100_000 {
        tail *= gamma;
        horizon += 1;
    }
    let mut rng = stream_rng(seed, streams::POLICY);
    let n_r = scm.n_r();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let confounder: Vec<&[f64]> = scm.confounder.chunks(scm.n_u).collect();
    let policy_rows: Vec<&[f64]> = policy.probs.chunks(policy.n_a).collect();
    for _ in 0..n_rollouts {
        let mut s = draw(&scm.init, &mut rng);
        let (mut ret, mut disc) = (0.0, 1.0);
        for _ in 0..horizon {
            let u = draw(confounder[s], &mut rng);
            let a = draw(policy_rows[s], &mut rng);
            let m = if scm.n_m == 1 {
                0
            } else {
                let row: Vec<f64> = (0..scm.n_m).map(|m| scm.p_m(s, a, u, m)).collect();
                draw(&row, &mut rng)
            };
            let k = draw(scm.outcome_row(s, a, m, u), &mut rng);
            ret += disc * scm.rewards[k % n_r];
            disc *= gamma;
            s = k / n_r;
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = n_rollouts as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    McEstimate { mean, std_err: (var / n).sqrt(), n: n_rollouts }
}
