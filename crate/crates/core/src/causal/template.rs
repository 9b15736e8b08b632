use serde::{Deserialize, Serialize};

use super::bellman::{greedy_policy, value_iteration, Policy, DEFAULT_TOL};
use super::identify::{backdoor_adjust, frontdoor_adjust, interventional_dynamics, ObservationalJoint, ProxyModel};
use super::scm::{Kernel, TabularScm};
use super::CausalError;

/// Identification route for the interventional kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Strategy {
    /// Back-door adjustment with the confounder recorded.
    Backdoor,
    /// Front-door adjustment through the mediator, confounder hidden.
    Frontdoor,
    /// Back-door adjustment on a noisy copy of the confounder. Only
    /// approximate: residual confounding remains unless `accuracy = 1`.
    Proxy { accuracy: f64 },
    /// Read the interventional kernel off a known SCM.
    Scm,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Self::Backdoor => "backdoor",
            Self::Frontdoor => "frontdoor",
            Self::Proxy { .. } => "proxy",
            Self::Scm => "scm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmOneReport {
    pub strategy: Strategy,
    pub kernel: Kernel,
    /// Largest entry error of the identified kernel against the true
    /// interventional kernel.
    pub identification_error: f64,
    /// Value of the input policy under the identified kernel.
    pub policy_value: Vec<f64>,
    pub improved_policy: Policy,
    /// Value of the improved policy under the true interventional kernel.
    pub improved_true_value: Vec<f64>,
    pub improvement_rounds: usize,
}

fn identify(scm: &TabularScm, strategy: Strategy) -> Result<Kernel, CausalError> {
    match strategy {
        Strategy::Backdoor => Ok(backdoor_adjust(&ObservationalJoint::from_scm(scm, &ProxyModel::exact(scm.n_u))?)),
        Strategy::Frontdoor => frontdoor_adjust(scm),
        Strategy::Proxy { accuracy } => {
            if !(0.0..=1.0).contains(&accuracy) {
                return Err(CausalError::Argument(format!("proxy accuracy {accuracy} outside [0, 1]")));
            }
            Ok(backdoor_adjust(&ObservationalJoint::from_scm(scm, &ProxyModel::noisy(scm.n_u, accuracy))?))
        }
        Strategy::Scm => Ok(interventional_dynamics(scm)),
    }
}

/// Identify the interventional kernel with the chosen strategy, evaluate
/// `policy` under it, then run policy iteration on the identified kernel.
pub fn algorithm_one(scm: &TabularScm, strategy: Strategy, policy: &Policy) -> Result<AlgorithmOneReport, CausalError> {
    scm.validate()?;
    let kernel = identify(scm, strategy)?;
    let truth = interventional_dynamics(scm);
    let identification_error = kernel.max_abs_diff(&truth);
    let policy_value = value_iteration(&kernel, policy, scm.gamma, DEFAULT_TOL)?.values;
    let mut current = greedy_policy(&kernel, scm.gamma, &policy_value);
    let mut rounds = 1;
    loop {
        let v = value_iteration(&kernel, &current, scm.gamma, DEFAULT_TOL)?.values;
        let next = greedy_policy(&kernel, scm.gamma, &v);
        if next == current || rounds >= 100 {
            break;
        }
        current = next;
        rounds += 1;
    }
    let improved_true_value = value_iteration(&truth, &current, scm.gamma, DEFAULT_TOL)?.values;
    Ok(AlgorithmOneReport {
        strategy,
        kernel,
        identification_error,
        policy_value,
        improved_policy: current,
        improved_true_value,
        improvement_rounds: rounds,
    })
}
