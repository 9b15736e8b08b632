//! Enumeration-oracle checks over the shipped fixtures. The CLI's
//! `causal-core selftest` succeeds iff every check passes.

use rand::Rng;
use serde::Serialize;

use super::bellman::{bellman_operator, do_rollout_value, value_iteration, Policy, DEFAULT_TOL};
use super::bounds::{ope_bounds, population_cells};
use super::identify::{
    backdoor_adjust, counterfactual_outcome, frontdoor_adjust, interventional_dynamics, observational_dynamics,
    ObservationalJoint, ProxyModel,
};
use super::scm::{fixtures, TabularScm};
use super::transport::{transport_estimate, DomainPair};
use super::{CausalError, ROW_TOL};
use crate::envcore::{stream_rng, streams};

/// z-score of the two-sided 99% normal interval.
pub const Z99: f64 = 2.5758293035489;

/// Exactness threshold for operators compared against enumeration.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(out: &mut Vec<Check>, name: &str, passed: bool, detail: String) {
    out.push(Check { name: name.to_string(), passed, detail });
}

fn failed(out: &mut Vec<Check>, name: &str, e: CausalError) {
    check(out, name, false, format!("error: {e}"));
}

fn named_fixtures() -> Vec<(&'static str, TabularScm)> {
    let pair = fixtures::transport_pair();
    vec![
        ("binary", fixtures::binary()),
        ("frontdoor", fixtures::frontdoor()),
        ("two_state", fixtures::two_state()),
        ("transport_source", pair.source),
        ("transport_target", pair.target),
    ]
}

fn identification(out: &mut Vec<Check>) {
    for (name, scm) in named_fixtures() {
        let truth = interventional_dynamics(&scm);
        let obs = observational_dynamics(&scm);
        let rows = truth.max_row_error().max(obs.max_row_error());
        check(out, &format!("rows_normalized/{name}"), rows <= ROW_TOL, format!("max row error {rows:.3e}"));
        match ObservationalJoint::from_scm(&scm, &ProxyModel::exact(scm.n_u)) {
            Ok(joint) => {
                let bd = backdoor_adjust(&joint);
                let err = bd.max_abs_diff(&truth);
                let all = bd.observable.iter().all(|&o| o);
                check(out, &format!("backdoor_exact/{name}"), err < EXACT_TOL && all, format!("max |Δ| {err:.3e}"));
            }
            Err(e) => failed(out, &format!("backdoor_exact/{name}"), e),
        }
    }

    let fd = fixtures::frontdoor();
    match frontdoor_adjust(&fd) {
        Ok(k) => {
            let err = k.max_abs_diff(&interventional_dynamics(&fd));
            let gap = observational_dynamics(&fd).max_abs_diff(&interventional_dynamics(&fd));
            check(out, "frontdoor_exact", err < EXACT_TOL, format!("max |Δ| {err:.3e}; observational bias {gap:.3}"));
        }
        Err(e) => failed(out, "frontdoor_exact", e),
    }
    let mut direct = fd.clone();
    // Let the action shift the outcome directly: A → R bypasses M.
    let w = direct.n_s * direct.n_r();
    for m in 0..direct.n_m {
        for u in 0..direct.n_u {
            let i = ((direct.n_m + m) * direct.n_u + u) * w;
            direct.outcome[i..i + w].copy_from_slice(&[0.05, 0.95]);
        }
    }
    let refused = matches!(frontdoor_adjust(&direct), Err(CausalError::FrontDoor(_)))
        && matches!(frontdoor_adjust(&fixtures::binary()), Err(CausalError::FrontDoor(_)));
    check(out, "frontdoor_refuses_nonconforming", refused, "direct A→R edge and mediator-free SCM".into());

    // Positivity: a behavior that copies u exactly leaves cells unsupported.
    let mut det = fixtures::binary();
    det.behavior = vec![1.0, 0.0, 0.0, 1.0];
    match ObservationalJoint::from_scm(&det, &ProxyModel::exact(2)) {
        Ok(j) => {
            let k = backdoor_adjust(&j);
            check(out, "backdoor_flags_positivity", k.observable.iter().all(|&o| !o), format!("mask {:?}", k.observable));
        }
        Err(e) => failed(out, "backdoor_flags_positivity", e),
    }

    let bin = fixtures::binary();
    let (o, i) = (observational_dynamics(&bin).expected_reward(0, 1), interventional_dynamics(&bin).expected_reward(0, 1));
    check(
        out,
        "binary_observational_vs_interventional",
        (o - 0.9).abs() < EXACT_TOL && (i - 0.5).abs() < EXACT_TOL,
        format!("E[R | a=1] = {o}, E[R | do(a=1)] = {i}"),
    );
}

fn transport(out: &mut Vec<Check>) {
    let pair = fixtures::transport_pair();
    match transport_estimate(&pair, &pair.target.confounder) {
        Ok(k) => {
            let err = k.max_abs_diff(&interventional_dynamics(&pair.target));
            let shift = interventional_dynamics(&pair.source).max_abs_diff(&interventional_dynamics(&pair.target));
            check(
                out,
                "transport_exact",
                err < EXACT_TOL && k.max_row_error() <= ROW_TOL,
                format!("max |Δ| {err:.3e}; source/target gap {shift:.3}"),
            );
        }
        Err(e) => failed(out, "transport_exact", e),
    }
    let same = DomainPair::new(pair.source.clone(), pair.source.clone(), pair.shared);
    match same.and_then(|p| transport_estimate(&p, &p.target.confounder)) {
        Ok(k) => {
            let err = k.max_abs_diff(&interventional_dynamics(&pair.source));
            check(out, "transport_identity", err < EXACT_TOL, format!("max |Δ| {err:.3e}"));
        }
        Err(e) => failed(out, "transport_identity", e),
    }
    let mut liar = pair.clone();
    liar.shared.behavior = true;
    check(out, "transport_detects_dishonest_flags", liar.check().is_err(), "behavior flagged shared".into());
}

fn counterfactuals(out: &mut Vec<Check>) {
    let bin = fixtures::binary();
    match counterfactual_outcome(&bin, 0, 1, 0, 1, 0) {
        Ok(cf) => check(
            out,
            "counterfactual_binary",
            cf.posterior == [0.0, 1.0] && cf.distribution == [1.0, 0.0],
            format!("posterior {:?}, counterfactual {:?}", cf.posterior, cf.distribution),
        ),
        Err(e) => failed(out, "counterfactual_binary", e),
    }
    // Consistency: replaying the factual action reproduces the observed
    // outcome whenever the outcome is deterministic given u.
    let mut ok = true;
    let mut count = 0;
    let n_r = bin.n_r();
    for a in 0..bin.n_a {
        for k in 0..bin.n_s * n_r {
            match counterfactual_outcome(&bin, 0, a, k / n_r, k % n_r, a) {
                Ok(cf) => {
                    count += 1;
                    ok &= cf.distribution.iter().enumerate().all(|(i, p)| if i == k { *p == 1.0 } else { *p == 0.0 });
                }
                Err(CausalError::ZeroProbability) => {}
                Err(_) => ok = false,
            }
        }
    }
    check(out, "counterfactual_consistency", ok && count > 0, format!("{count} observable transitions"));
    check(
        out,
        "counterfactual_zero_probability",
        matches!(
            counterfactual_outcome(&{
                let mut d = bin.clone();
                d.behavior = vec![1.0, 0.0, 0.0, 1.0];
                d
            }, 0, 1, 0, 0, 0),
            Err(CausalError::ZeroProbability)
        ),
        "impossible observation".into(),
    );
}

fn bellman(out: &mut Vec<Check>, n_rollouts: usize) {
    let scm = fixtures::two_state();
    let pi = Policy::deterministic(&[1, 1], 2);
    let causal = value_iteration(&interventional_dynamics(&scm), &pi, scm.gamma, DEFAULT_TOL);
    let assoc = value_iteration(&observational_dynamics(&scm), &pi, scm.gamma, DEFAULT_TOL);
    match (causal, assoc) {
        (Ok(c), Ok(a)) => {
            let vc: f64 = scm.init.iter().zip(&c.values).map(|(p, v)| p * v).sum();
            let va: f64 = scm.init.iter().zip(&a.values).map(|(p, v)| p * v).sum();
            let mc = do_rollout_value(&scm, &pi, scm.gamma, n_rollouts, 0);
            // Value iteration stops within γ·tol/(1 − γ) of the fixed point.
            let half = Z99 * mc.std_err + DEFAULT_TOL * scm.gamma / (1.0 - scm.gamma);
            check(
                out,
                "causal_vi_matches_do_rollouts",
                (vc - mc.mean).abs() <= half,
                format!("V_c {vc:.5}, MC {:.5} ± {half:.5} ({} rollouts)", mc.mean, mc.n),
            );
            check(
                out,
                "associational_vi_is_biased",
                (va - mc.mean).abs() > half,
                format!("V_assoc {va:.5} vs MC {:.5}", mc.mean),
            );
        }
        (Err(e), _) | (_, Err(e)) => failed(out, "causal_vi_matches_do_rollouts", e),
    }

    // γ-contraction on random value pairs.
    let mut rng = stream_rng(11, streams::TRAIN);
    let k = interventional_dynamics(&scm);
    let pu = Policy::uniform(scm.n_s, scm.n_a);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1_000 {
        let v1: Vec<f64> = (0..scm.n_s).map(|_| rng.random_range(-50.0..50.0)).collect();
        let v2: Vec<f64> = (0..scm.n_s).map(|_| rng.random_range(-50.0..50.0)).collect();
        let (t1, t2) = (bellman_operator(&k, &pu, scm.gamma, &v1), bellman_operator(&k, &pu, scm.gamma, &v2));
        if let (Ok(t1), Ok(t2)) = (t1, t2) {
            let lhs = t1.iter().zip(&t2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let rhs = v1.iter().zip(&v2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(lhs - scm.gamma * rhs);
        }
    }
    check(out, "bellman_contraction", worst <= 1e-12, format!("max ‖TV1 − TV2‖ − γ‖V1 − V2‖ = {worst:.3e}"));
}

fn bounds(out: &mut Vec<Check>) {
    let scm = fixtures::binary();
    let pi = Policy::deterministic(&[1], 2);
    let truth = interventional_dynamics(&scm).expected_reward(0, 1);
    let (cells, gamma_star) = match population_cells(&scm, &pi) {
        Ok(x) => x,
        Err(e) => return failed(out, "ope_bounds", e),
    };
    let grid = [1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 12.0, 20.0, 50.0];
    let mut intervals = Vec::new();
    for &g in &grid {
        match ope_bounds(&cells, g) {
            Ok(b) => intervals.push((g, b)),
            Err(e) => return failed(out, "ope_bounds", e),
        }
    }
    let first = intervals[0].1;
    check(
        out,
        "ope_bounds_gamma_one",
        first.lower == first.upper && first.lower == first.nominal,
        format!("[{}, {}] nominal {}", first.lower, first.upper, first.nominal),
    );
    let nested = intervals.windows(2).all(|w| w[1].1.lower <= w[0].1.lower && w[1].1.upper >= w[0].1.upper);
    check(out, "ope_bounds_monotone", nested, format!("{} Γ values", grid.len()));
    let contained = intervals.iter().filter(|(g, _)| *g >= gamma_star).all(|(_, b)| b.lower <= truth && truth <= b.upper);
    let excluded_at_one = !(first.lower <= truth && truth <= first.upper);
    check(
        out,
        "ope_bounds_contain_truth",
        contained && excluded_at_one,
        format!("Γ* = {gamma_star}, truth {truth}, nominal {}", first.nominal),
    );
    match ope_bounds(&cells, 1e9) {
        Ok(b) => {
            let (lo, hi) = (0.0, 1.0);
            check(
                out,
                "ope_bounds_wide_limit",
                (b.lower - lo).abs() < 1e-6 && (b.upper - hi).abs() < 1e-6,
                format!("[{:.3e}, {:.9}]", b.lower, b.upper),
            );
        }
        Err(e) => failed(out, "ope_bounds_wide_limit", e),
    }
}

/// Run every check with `n_rollouts` Monte Carlo do-rollouts.
pub fn run_with(n_rollouts: usize) -> Vec<Check> {
    let mut out = Vec::new();
    identification(&mut out);
    transport(&mut out);
    counterfactuals(&mut out);
    bellman(&mut out, n_rollouts);
    bounds(&mut out);
    out
}

pub const DEFAULT_ROLLOUTS: usize = 1_000_000;

pub fn run() -> Vec<Check> {
    run_with(DEFAULT_ROLLOUTS)
}
