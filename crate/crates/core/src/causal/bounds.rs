use super::bellman::Policy;
use super::identify::{interventional_dynamics, observational_dynamics};
use super::scm::TabularScm;
use super::CausalError;

/// A logged outcome class with its return `g`, nominal importance weight
/// `w0 = π(a | s) / b(a | s)` and probability mass (or count).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedCell {
    pub g: f64,
    pub w0: f64,
    pub mass: f64,
}

impl LoggedCell {
    /// Build a cell from propensities; a target-supported action the
    /// behavior never plays makes every bound vacuous.
    pub fn from_propensities(
        g: f64,
        target: f64,
        behavior: f64,
        mass: f64,
        state: usize,
        action: usize,
    ) -> Result<Self, CausalError> {
        if behavior <= 0.0 {
            if target > 0.0 {
                return Err(CausalError::Unbounded { state, action });
            }
            return Ok(Self { g, w0: 0.0, mass });
        }
        Ok(Self { g, w0: target / behavior, mass })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpeBounds {
    pub lower: f64,
    pub upper: f64,
    /// Self-normalized importance-sampling estimate (`Γ = 1`).
    pub nominal: f64,
}

/// Extreme self-normalized value over weights `w_i ∈ [w0_i / Γ, w0_i Γ]`.
/// The optimum puts the cap on every cell beyond a return threshold and
/// the floor on the rest, so enumerating the thresholds over cells sorted
/// by `g` is exact.
fn extreme(cells: &[LoggedCell], gamma: f64, maximize: bool) -> f64 {
    let mut order: Vec<&LoggedCell> = cells.iter().collect();
    order.sort_by(|a, b| if maximize { b.g.total_cmp(&a.g) } else { a.g.total_cmp(&b.g) });
    let lo = |c: &LoggedCell| c.mass * c.w0 / gamma;
    let hi = |c: &LoggedCell| c.mass * c.w0 * gamma;
    // Start with every cell at the floor, then raise one more cell per step.
    let mut num: f64 = order.iter().map(|c| lo(c) * c.g).sum();
    let mut den: f64 = order.iter().map(|c| lo(c)).sum();
    let mut best = num / den;
    for c in &order {
        num += (hi(c) - lo(c)) * c.g;
        den += hi(c) - lo(c);
        let v = num / den;
        best = if maximize { best.max(v) } else { best.min(v) };
    }
    best
}

/// Partial-identification interval for the self-normalized weighted return
/// under the marginal sensitivity box of size `Γ`.
pub fn ope_bounds(cells: &[LoggedCell], gamma: f64) -> Result<OpeBounds, CausalError> {
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(CausalError::Argument(format!("sensitivity Γ must be finite and ≥ 1, got {gamma}")));
    }
    if cells.iter().any(|c| !(c.mass >= 0.0 && c.w0 >= 0.0 && c.g.is_finite() && c.w0.is_finite())) {
        return Err(CausalError::Argument("cells need finite returns and non-negative weights and masses".into()));
    }
    let live: Vec<LoggedCell> = cells.iter().copied().filter(|c| c.mass > 0.0 && c.w0 > 0.0).collect();
    if live.is_empty() {
        return Err(CausalError::Argument("no logged cell carries target weight".into()));
    }
    let den: f64 = live.iter().map(|c| c.mass * c.w0).sum();
    let nominal = live.iter().map(|c| c.mass * c.w0 * c.g).sum::<f64>() / den;
    if gamma == 1.0 {
        return Ok(OpeBounds { lower: nominal, upper: nominal, nominal });
    }
    Ok(OpeBounds { lower: extreme(&live, gamma, false), upper: extreme(&live, gamma, true), nominal })
}

/// Infinite-sample logged cells of a one-step evaluation of `policy` on the
/// SCM: one cell per observed `(s, a, s', r)` with return `r`, mass
/// `P(s0) P(a | s) P(s', r | s, a)` and nominal weight `π(a | s) / P(a | s)`.
/// Also returns the smallest `Γ` whose box contains the weights that make
/// the self-normalized estimate equal the interventional one-step value.
pub fn population_cells(scm: &TabularScm, policy: &Policy) -> Result<(Vec<LoggedCell>, f64), CausalError> {
    let obs = observational_dynamics(scm);
    let int = interventional_dynamics(scm);
    let n_r = scm.n_r();
    let mut cells = Vec::new();
    let mut gamma_star = 1.0f64;
    for s in 0..scm.n_s {
        for a in 0..scm.n_a {
            let b = scm.behavior_marginal(s, a);
            let t = policy.prob(s, a);
            for k in 0..scm.n_s * n_r {
                let (p_obs, p_do) = (obs.row(s, a)[k], int.row(s, a)[k]);
                let mass = scm.init[s] * b * p_obs;
                if t > 0.0 && scm.init[s] > 0.0 && (p_obs > 0.0) != (p_do > 0.0) {
                    gamma_star = f64::INFINITY;
                } else if t > 0.0 && scm.init[s] > 0.0 && p_obs > 0.0 {
                    let ratio = p_do / p_obs;
                    gamma_star = gamma_star.max(ratio).max(1.0 / ratio);
                }
                cells.push(LoggedCell::from_propensities(scm.rewards[k % n_r], t, b, mass, s, a)?);
            }
        }
    }
    Ok((cells, gamma_star))
}
