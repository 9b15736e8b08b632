use serde::{Deserialize, Serialize};

use super::scm::{Kernel, TabularScm};
use super::{CausalError, ROW_TOL};

/// Which mechanisms are invariant across the two domains (the role a
/// selection diagram plays). The confounder distribution `P(z | s)` is the
/// piece allowed to shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedMechanisms {
    pub behavior: bool,
    pub mediator: bool,
    pub outcome: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: TabularScm,
    pub target: TabularScm,
    pub shared: SharedMechanisms,
}

impl DomainPair {
    pub fn new(source: TabularScm, target: TabularScm, shared: SharedMechanisms) -> Result<Self, CausalError> {
        let pair = Self { source, target, shared };
        pair.check()?;
        Ok(pair)
    }

    /// Shapes agree and every mechanism flagged shared is bit-identical.
    pub fn check(&self) -> Result<(), CausalError> {
        let (s, t) = (&self.source, &self.target);
        s.validate()?;
        t.validate()?;
        if (s.n_s, s.n_u, s.n_a, s.n_m) != (t.n_s, t.n_u, t.n_a, t.n_m) || s.rewards != t.rewards {
            return Err(CausalError::Transport("domains have different variable domains".into()));
        }
        let tables = [
            ("behavior", self.shared.behavior, &s.behavior, &t.behavior),
            ("mediator", self.shared.mediator, &s.mediator, &t.mediator),
            ("outcome", self.shared.outcome, &s.outcome, &t.outcome),
        ];
        for (name, flagged, a, b) in tables {
            if flagged && a != b {
                return Err(CausalError::Transport(format!("{name} is flagged shared but differs across domains")));
            }
        }
        Ok(())
    }
}

/// Target-domain `P_t(s', r | s, do(a)) = Σ_z P_t(z | s) Σ_m P_s(m | s, a, z) P_s(s', r | s, a, m, z)`:
/// the shifted covariate distribution comes from the target, every
/// mechanism from the source. `target_z` is `P_t(z | s)` as `[s][z]`.
pub fn transport_estimate(pair: &DomainPair, target_z: &[f64]) -> Result<Kernel, CausalError> {
    pair.check()?;
    if !(pair.shared.mediator && pair.shared.outcome) {
        return Err(CausalError::Transport("mediator and outcome mechanisms must both be shared".into()));
    }
    let src = &pair.source;
    if target_z.len() != src.n_s * src.n_u {
        return Err(CausalError::Argument(format!("target P(z | s) needs {} entries", src.n_s * src.n_u)));
    }
    for row in target_z.chunks(src.n_u) {
        if row.iter().any(|p| *p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOL {
            return Err(CausalError::Argument("target P(z | s) rows must be distributions".into()));
        }
    }
    let mut k = Kernel::zeros(src.n_s, src.n_a, &src.rewards);
    for s in 0..src.n_s {
        for a in 0..src.n_a {
            for z in 0..src.n_u {
                let w = target_z[s * src.n_u + z];
                if w > 0.0 {
                    let row = src.outcome_given_u(s, a, z);
                    for (acc, p) in k.row_mut(s, a).iter_mut().zip(row) {
                        *acc += w * p;
                    }
                }
            }
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{fixtures, interventional_dynamics};

    #[test]
    fn shipped_pair_matches_target() {
        let pair = fixtures::transport_pair();
        let k = transport_estimate(&pair, &pair.target.confounder).unwrap();
        assert!(k.max_abs_diff(&interventional_dynamics(&pair.target)) < 1e-12);
    }

    #[test]
    fn dishonest_flags_are_detected() {
        let mut pair = fixtures::transport_pair();
        pair.shared.behavior = true;
        assert!(matches!(pair.check(), Err(CausalError::Transport(_))));
        assert!(transport_estimate(&pair, &pair.target.confounder.clone()).is_err());
    }
}
