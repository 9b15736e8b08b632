use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CausalError, ROW_TOL};

pub const SCM_FORMAT: &str = "crlbench-scm-v1";

/// A finite causal MDP with a per-step confounder `u`.
///
/// Tables are dense and flattened row-major in the index order given on each
/// field. Rewards live on the finite support `rewards`; outcome rows are joint
/// distributions over `(s', r)`. SCMs without a mediator use `n_m = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularScm {
    pub n_s: usize,
    pub n_u: usize,
    pub n_a: usize,
    pub n_m: usize,
    pub rewards: Vec<f64>,
    pub gamma: f64,
    /// `P(s0)`.
    pub init: Vec<f64>,
    /// `P(u | s)`, `[s][u]`.
    pub confounder: Vec<f64>,
    /// `P(a | s, u)`, `[s][u][a]`.
    pub behavior: Vec<f64>,
    /// `P(m | s, a, u)`, `[s][a][u][m]`.
    pub mediator: Vec<f64>,
    /// `P(s', r | s, a, m, u)`, `[s][a][m][u][s'][r]`.
    pub outcome: Vec<f64>,
}

/// Dense `P(s', r | s, a)` with a per-cell identifiability mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub n_s: usize,
    pub n_a: usize,
    pub rewards: Vec<f64>,
    /// `[s][a][s'][r]`.
    pub probs: Vec<f64>,
    /// `[s][a]`; unobservable rows hold zeros.
    pub observable: Vec<bool>,
}

impl Kernel {
    pub fn zeros(n_s: usize, n_a: usize, rewards: &[f64]) -> Self {
        Self {
            n_s,
            n_a,
            rewards: rewards.to_vec(),
            probs: vec![0.0; n_s * n_a * n_s * rewards.len()],
            observable: vec![true; n_s * n_a],
        }
    }

    pub fn n_r(&self) -> usize {
        self.rewards.len()
    }

    pub fn row_len(&self) -> usize {
        self.n_s * self.n_r()
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let w = self.row_len();
        let i = (s * self.n_a + a) * w;
        &self.probs[i..i + w]
    }

    pub fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let w = self.row_len();
        let i = (s * self.n_a + a) * w;
        &mut self.probs[i..i + w]
    }

    pub fn get(&self, s: usize, a: usize, s2: usize, r: usize) -> f64 {
        self.row(s, a)[s2 * self.n_r() + r]
    }

    pub fn is_observable(&self, s: usize, a: usize) -> bool {
        self.observable[s * self.n_a + a]
    }

    pub fn mark_unobservable(&mut self, s: usize, a: usize) {
        self.observable[s * self.n_a + a] = false;
        self.row_mut(s, a).iter_mut().for_each(|p| *p = 0.0);
    }

    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        let n_r = self.n_r();
        self.row(s, a).iter().enumerate().map(|(i, p)| p * self.rewards[i % n_r]).sum()
    }

    /// Largest absolute entry difference over cells observable in both.
    pub fn max_abs_diff(&self, other: &Kernel) -> f64 {
        assert_eq!(self.probs.len(), other.probs.len(), "kernel shapes differ");
        let mut worst = 0.0f64;
        for s in 0..self.n_s {
            for a in 0..self.n_a {
                if self.is_observable(s, a) && other.is_observable(s, a) {
                    for (x, y) in self.row(s, a).iter().zip(other.row(s, a)) {
                        worst = worst.max((x - y).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest `|Σ row − 1|` over observable rows.
    pub fn max_row_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for s in 0..self.n_s {
            for a in 0..self.n_a {
                if self.is_observable(s, a) {
                    worst = worst.max((self.row(s, a).iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
        worst
    }
}

fn check_rows(table: &'static str, data: &[f64], width: usize) -> Result<(), CausalError> {
    for (row, chunk) in data.chunks(width).enumerate() {
        if let Some(p) = chunk.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(CausalError::Invalid(format!("{table} row {row} has entry {p}")));
        }
        let sum: f64 = chunk.iter().sum();
        if (sum - 1.0).abs() > ROW_TOL {
            return Err(CausalError::Normalization { table, row, sum });
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ScmFile {
    format: String,
    states: usize,
    confounders: usize,
    actions: usize,
    mediators: usize,
    rewards: Vec<f64>,
    gamma: f64,
    init: Vec<f64>,
    confounder: Value,
    behavior: Value,
    mediator: Value,
    outcome: Value,
}

fn flatten(name: &str, v: &Value, dims: &[usize], out: &mut Vec<f64>) -> Result<(), CausalError> {
    match dims.split_first() {
        None => {
            let x = v.as_f64().ok_or_else(|| CausalError::Parse(format!("{name}: expected a number, got {v}")))?;
            out.push(x);
        }
        Some((&n, rest)) => {
            let items = v.as_array().ok_or_else(|| CausalError::Parse(format!("{name}: expected an array")))?;
            if items.len() != n {
                return Err(CausalError::Parse(format!("{name}: expected {n} entries, got {}", items.len())));
            }
            for item in items {
                flatten(name, item, rest, out)?;
            }
        }
    }
    Ok(())
}

fn nest(data: &[f64], dims: &[usize]) -> Value {
    match dims.split_first() {
        None => Value::from(data[0]),
        Some((&n, rest)) => {
            let stride: usize = rest.iter().product();
            Value::Array((0..n).map(|i| nest(&data[i * stride..(i + 1) * stride], rest)).collect())
        }
    }
}

impl TabularScm {
    pub fn n_r(&self) -> usize {
        self.rewards.len()
    }

    pub fn p_u(&self, s: usize, u: usize) -> f64 {
        self.confounder[s * self.n_u + u]
    }

    pub fn p_a(&self, s: usize, u: usize, a: usize) -> f64 {
        self.behavior[(s * self.n_u + u) * self.n_a + a]
    }

    pub fn p_m(&self, s: usize, a: usize, u: usize, m: usize) -> f64 {
        self.mediator[((s * self.n_a + a) * self.n_u + u) * self.n_m + m]
    }

    /// `P(·, · | s, a, m, u)` over `(s', r)`.
    pub fn outcome_row(&self, s: usize, a: usize, m: usize, u: usize) -> &[f64] {
        let w = self.n_s * self.n_r();
        let i = (((s * self.n_a + a) * self.n_m + m) * self.n_u + u) * w;
        &self.outcome[i..i + w]
    }

    /// `P(s', r | s, a, u)` with the mediator summed out.
    pub fn outcome_given_u(&self, s: usize, a: usize, u: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n_s * self.n_r()];
        for m in 0..self.n_m {
            let pm = self.p_m(s, a, u, m);
            if pm > 0.0 {
                for (acc, p) in row.iter_mut().zip(self.outcome_row(s, a, m, u)) {
                    *acc += pm * p;
                }
            }
        }
        row
    }

    /// Marginal behavior `P(a | s) = Σ_u P(u | s) P(a | s, u)`.
    pub fn behavior_marginal(&self, s: usize, a: usize) -> f64 {
        (0..self.n_u).map(|u| self.p_u(s, u) * self.p_a(s, u, a)).sum()
    }

    pub fn validate(&self) -> Result<(), CausalError> {
        let (s, u, a, m, r) = (self.n_s, self.n_u, self.n_a, self.n_m, self.n_r());
        if s == 0 || u == 0 || a == 0 || m == 0 || r == 0 {
            return Err(CausalError::Invalid("every domain needs at least one value".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(CausalError::Invalid(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.rewards.iter().any(|x| !x.is_finite()) {
            return Err(CausalError::Invalid("non-finite reward support".into()));
        }
        let sizes = [
            ("init", self.init.len(), s),
            ("confounder", self.confounder.len(), s * u),
            ("behavior", self.behavior.len(), s * u * a),
            ("mediator", self.mediator.len(), s * a * u * m),
            ("outcome", self.outcome.len(), s * a * m * u * s * r),
        ];
        for (name, got, want) in sizes {
            if got != want {
                return Err(CausalError::Invalid(format!("{name} has {got} entries, expected {want}")));
            }
        }
        check_rows("init", &self.init, s)?;
        check_rows("confounder", &self.confounder, u)?;
        check_rows("behavior", &self.behavior, a)?;
        check_rows("mediator", &self.mediator, m)?;
        check_rows("outcome", &self.outcome, s * r)
    }

    pub fn from_json(text: &str) -> Result<Self, CausalError> {
        let value: Value = serde_json::from_str(text).map_err(|e| CausalError::Parse(e.to_string()))?;
        Self::from_value(&value)
    }

    fn from_value(value: &Value) -> Result<Self, CausalError> {
        let f: ScmFile = serde_json::from_value(value.clone()).map_err(|e| CausalError::Parse(e.to_string()))?;
        if f.format != SCM_FORMAT {
            return Err(CausalError::Parse(format!("unknown format tag {:?}", f.format)));
        }
        let (s, u, a, m, r) = (f.states, f.confounders, f.actions, f.mediators, f.rewards.len());
        let mut tables = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        flatten("confounder", &f.confounder, &[s, u], &mut tables[0])?;
        flatten("behavior", &f.behavior, &[s, u, a], &mut tables[1])?;
        flatten("mediator", &f.mediator, &[s, a, u, m], &mut tables[2])?;
        flatten("outcome", &f.outcome, &[s, a, m, u, s, r], &mut tables[3])?;
        let [confounder, behavior, mediator, outcome] = tables;
        let scm = Self {
            n_s: s,
            n_u: u,
            n_a: a,
            n_m: m,
            rewards: f.rewards,
            gamma: f.gamma,
            init: f.init,
            confounder,
            behavior,
            mediator,
            outcome,
        };
        scm.validate()?;
        Ok(scm)
    }

    pub fn to_value(&self) -> Value {
        let (s, u, a, m, r) = (self.n_s, self.n_u, self.n_a, self.n_m, self.n_r());
        let file = ScmFile {
            format: SCM_FORMAT.to_string(),
            states: s,
            confounders: u,
            actions: a,
            mediators: m,
            rewards: self.rewards.clone(),
            gamma: self.gamma,
            init: self.init.clone(),
            confounder: nest(&self.confounder, &[s, u]),
            behavior: nest(&self.behavior, &[s, u, a]),
            mediator: nest(&self.mediator, &[s, a, u, m]),
            outcome: nest(&self.outcome, &[s, a, m, u, s, r]),
        };
        serde_json::to_value(file).expect("plain numeric tables serialize")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("plain numeric tables serialize")
    }

    /// Load an SCM from a parsed JSON value in the fixture format.
    pub fn from_json_value(value: &Value) -> Result<Self, CausalError> {
        Self::from_value(value)
    }
}

/// SCMs shipped with the crate.
pub mod fixtures {
    use super::*;
    use crate::causal::transport::{DomainPair, SharedMechanisms};

    pub const BINARY_JSON: &str = include_str!("../../fixtures/binary.json");
    pub const FRONTDOOR_JSON: &str = include_str!("../../fixtures/frontdoor.json");
    pub const TWO_STATE_JSON: &str = include_str!("../../fixtures/two_state.json");
    pub const TRANSPORT_PAIR_JSON: &str = include_str!("../../fixtures/transport_pair.json");

    /// `U ~ Bern(0.5)`, behavior copies `U` with probability 0.9, `r = 1{a = u}`.
    pub fn binary() -> TabularScm {
        TabularScm::from_json(BINARY_JSON).expect("shipped fixture is valid")
    }

    /// `A → M → R` with `U` confounding `A` and `R` only.
    pub fn frontdoor() -> TabularScm {
        TabularScm::from_json(FRONTDOOR_JSON).expect("shipped fixture is valid")
    }

    /// Two-state MDP whose behavior policy plays the risky action mostly
    /// when the confounder makes it pay.
    pub fn two_state() -> TabularScm {
        TabularScm::from_json(TWO_STATE_JSON).expect("shipped fixture is valid")
    }

    /// Source and target domains that differ in `P(z | s)` and behavior but
    /// share mediator and outcome mechanisms.
    pub fn transport_pair() -> DomainPair {
        let v: Value = serde_json::from_str(TRANSPORT_PAIR_JSON).expect("shipped fixture is valid json");
        let shared: SharedMechanisms = serde_json::from_value(v["shared"].clone()).expect("shared flags");
        DomainPair::new(
            TabularScm::from_json_value(&v["source"]).expect("source fixture"),
            TabularScm::from_json_value(&v["target"]).expect("target fixture"),
            shared,
        )
        .expect("shipped pair is honest")
    }
}
