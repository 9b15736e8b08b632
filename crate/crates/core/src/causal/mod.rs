//! Finite structural causal models and exact identification operators.
//!
//! Every quantity here is a finite sum over dense probability tables, so each
//! operator can be checked against brute-force enumeration of the SCM.

mod bellman;
mod bounds;
mod identify;
mod scm;
pub mod selftest;
mod template;
mod transport;

pub use bellman::{
    associational_value_iteration, bellman_operator, causal_value_iteration, do_rollout_value, greedy_policy, value_iteration,
    McEstimate, Policy, ValueIteration, DEFAULT_TOL, MAX_ITERATIONS,
};
pub use bounds::{ope_bounds, population_cells, LoggedCell, OpeBounds};
pub use identify::{
    backdoor_adjust, counterfactual_outcome, frontdoor_adjust, frontdoor_conformance, frontdoor_from_joint,
    interventional_dynamics, observational_dynamics, sample_transitions, Counterfactual, ObsSample, ObservationalJoint,
    ProxyModel,
};
pub use scm::{fixtures, Kernel, TabularScm, SCM_FORMAT};
pub use template::{algorithm_one, AlgorithmOneReport, Strategy};
pub use transport::{transport_estimate, DomainPair, SharedMechanisms};

use thiserror::Error;

/// Tolerance for probability rows summing to one.
pub const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CausalError {
    #[error("invalid SCM: {0}")]
    Invalid(String),
    #[error("{table} row {row} sums to {sum}")]
    Normalization { table: &'static str, row: usize, sum: f64 },
    #[error("SCM json: {0}")]
    Parse(String),
    #[error("front-door conditions violated: {0}")]
    FrontDoor(String),
    #[error("observation has zero probability under the model")]
    ZeroProbability,
    #[error("value iteration did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("behavior assigns zero probability to action {action} in state {state}, which the target policy plays")]
    Unbounded { state: usize, action: usize },
    #[error("policy plays unidentified cell (state {state}, action {action})")]
    Unobservable { state: usize, action: usize },
    #[error("transport: {0}")]
    Transport(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}
