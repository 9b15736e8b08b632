use rand::Rng;

use super::scm::{Kernel, TabularScm};
use super::{CausalError, ROW_TOL};

/// `P(s', r | s, a)`: the confounder enters through its posterior
/// `P(u | s, a) ∝ P(a | s, u) P(u | s)`. Cells the behavior never plays are
/// marked unobservable.
pub fn observational_dynamics(scm: &TabularScm) -> Kernel {
    let mut k = Kernel::zeros(scm.n_s, scm.n_a, &scm.rewards);
    for s in 0..scm.n_s {
        for a in 0..scm.n_a {
            let pa = scm.behavior_marginal(s, a);
            if pa <= 0.0 {
                k.mark_unobservable(s, a);
                continue;
            }
            for u in 0..scm.n_u {
                let w = scm.p_u(s, u) * scm.p_a(s, u, a) / pa;
                if w > 0.0 {
                    let row = scm.outcome_given_u(s, a, u);
                    for (acc, p) in k.row_mut(s, a).iter_mut().zip(row) {
                        *acc += w * p;
                    }
                }
            }
        }
    }
    k
}

/// `P(s', r | s, do(a)) = Σ_u P(s', r | s, a, u) P(u | s)`.
pub fn interventional_dynamics(scm: &TabularScm) -> Kernel {
    let mut k = Kernel::zeros(scm.n_s, scm.n_a, &scm.rewards);
    for s in 0..scm.n_s {
        for a in 0..scm.n_a {
            for u in 0..scm.n_u {
                let w = scm.p_u(s, u);
                if w > 0.0 {
                    let row = scm.outcome_given_u(s, a, u);
                    for (acc, p) in k.row_mut(s, a).iter_mut().zip(row) {
                        *acc += w * p;
                    }
                }
            }
        }
    }
    k
}

/// How the observed adjustment variable `z` relates to the confounder:
/// `P(z | u)` as a `[u][z]` table.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyModel {
    pub n_z: usize,
    pub table: Vec<f64>,
}

impl ProxyModel {
    /// `z ≡ u`: the confounder itself is recorded.
    pub fn exact(n_u: usize) -> Self {
        let mut table = vec![0.0; n_u * n_u];
        for u in 0..n_u {
            table[u * n_u + u] = 1.0;
        }
        Self { n_z: n_u, table }
    }

    /// Nothing about `u` is recorded.
    pub fn hidden(n_u: usize) -> Self {
        Self { n_z: 1, table: vec![1.0; n_u] }
    }

    /// Binary-style symmetric noisy copy: `z = u` with probability `accuracy`,
    /// otherwise uniform over the other values.
    pub fn noisy(n_u: usize, accuracy: f64) -> Self {
        let mut table = vec![0.0; n_u * n_u];
        for u in 0..n_u {
            for z in 0..n_u {
                table[u * n_u + z] = if z == u {
                    accuracy
                } else if n_u > 1 {
                    (1.0 - accuracy) / (n_u - 1) as f64
                } else {
                    0.0
                };
            }
        }
        Self { n_z: n_u, table }
    }

    fn p(&self, u: usize, z: usize) -> f64 {
        self.table[u * self.n_z + z]
    }

    fn validate(&self, n_u: usize) -> Result<(), CausalError> {
        if self.n_z == 0 || self.table.len() != n_u * self.n_z {
            return Err(CausalError::Argument(format!("proxy table needs {n_u}×{} entries", self.n_z)));
        }
        for row in self.table.chunks(self.n_z) {
            if row.iter().any(|p| *p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOL {
                return Err(CausalError::Argument("proxy rows must be probability vectors".into()));
            }
        }
        Ok(())
    }
}

/// One logged transition with the recorded adjustment variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsSample {
    pub s: usize,
    pub z: usize,
    pub a: usize,
    pub m: usize,
    pub s2: usize,
    pub r: usize,
}

/// Joint distribution of everything observed, `[s][z][a][m][s'][r]`, with
/// states weighted uniformly. Only conditionals given `s` are ever used, so
/// the state weighting does not affect any adjusted kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationalJoint {
    pub n_s: usize,
    pub n_z: usize,
    pub n_a: usize,
    pub n_m: usize,
    pub rewards: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ObservationalJoint {
    fn n_r(&self) -> usize {
        self.rewards.len()
    }

    fn tail(&self) -> usize {
        self.n_s * self.n_r()
    }

    fn index(&self, s: usize, z: usize, a: usize, m: usize) -> usize {
        (((s * self.n_z + z) * self.n_a + a) * self.n_m + m) * self.tail()
    }

    /// Exact joint implied by the SCM.
    pub fn from_scm(scm: &TabularScm, proxy: &ProxyModel) -> Result<Self, CausalError> {
        proxy.validate(scm.n_u)?;
        let mut j = Self {
            n_s: scm.n_s,
            n_z: proxy.n_z,
            n_a: scm.n_a,
            n_m: scm.n_m,
            rewards: scm.rewards.clone(),
            probs: vec![0.0; scm.n_s * proxy.n_z * scm.n_a * scm.n_m * scm.n_s * scm.n_r()],
        };
        let ws = 1.0 / scm.n_s as f64;
        let tail = j.tail();
        for s in 0..scm.n_s {
            for u in 0..scm.n_u {
                for z in 0..proxy.n_z {
                    for a in 0..scm.n_a {
                        for m in 0..scm.n_m {
                            let w = ws * scm.p_u(s, u) * proxy.p(u, z) * scm.p_a(s, u, a) * scm.p_m(s, a, u, m);
                            if w == 0.0 {
                                continue;
                            }
                            let i = j.index(s, z, a, m);
                            for (acc, p) in j.probs[i..i + tail].iter_mut().zip(scm.outcome_row(s, a, m, u)) {
                                *acc += w * p;
                            }
                        }
                    }
                }
            }
        }
        Ok(j)
    }

    /// Empirical joint from logged samples.
    pub fn from_samples(
        n_s: usize,
        n_z: usize,
        n_a: usize,
        n_m: usize,
        rewards: &[f64],
        samples: &[ObsSample],
    ) -> Result<Self, CausalError> {
        if samples.is_empty() {
            return Err(CausalError::Argument("no samples".into()));
        }
        let mut j = Self { n_s, n_z, n_a, n_m, rewards: rewards.to_vec(), probs: vec![0.0; n_s * n_z * n_a * n_m * n_s * rewards.len()] };
        let mut per_state = vec![0usize; n_s];
        for x in samples {
            if x.s >= n_s || x.z >= n_z || x.a >= n_a || x.m >= n_m || x.s2 >= n_s || x.r >= rewards.len() {
                return Err(CausalError::Argument(format!("sample {x:?} outside the declared domains")));
            }
            per_state[x.s] += 1;
        }
        // Uniform state weighting, matching the exact joint.
        for x in samples {
            let i = j.index(x.s, x.z, x.a, x.m) + x.s2 * j.n_r() + x.r;
            j.probs[i] += 1.0 / (n_s as f64 * per_state[x.s] as f64);
        }
        Ok(j)
    }

    /// Marginal mass of `(s, z, a)`.
    fn mass_sza(&self, s: usize, z: usize, a: usize) -> f64 {
        let i = self.index(s, z, a, 0);
        self.probs[i..i + self.n_m * self.tail()].iter().sum()
    }
}

/// Draw `n` transitions from the SCM with uniformly chosen start states.
pub fn sample_transitions<R: Rng + ?Sized>(scm: &TabularScm, proxy: &ProxyModel, n: usize, rng: &mut R) -> Vec<ObsSample> {
    fn draw<R: Rng + ?Sized>(probs: impl Iterator<Item = f64>, rng: &mut R) -> usize {
        let x: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, p) in probs.enumerate() {
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
    (0..n)
        .map(|_| {
            let s = rng.random_range(0..scm.n_s);
            let u = draw((0..scm.n_u).map(|u| scm.p_u(s, u)), rng);
            let z = draw((0..proxy.n_z).map(|z| proxy.p(u, z)), rng);
            let a = draw((0..scm.n_a).map(|a| scm.p_a(s, u, a)), rng);
            let m = draw((0..scm.n_m).map(|m| scm.p_m(s, a, u, m)), rng);
            let k = draw(scm.outcome_row(s, a, m, u).iter().copied(), rng);
            ObsSample { s, z, a, m, s2: k / scm.n_r(), r: k % scm.n_r() }
        })
        .collect()
}

/// `P(s', r | s, do(a)) = Σ_z P(s', r | s, a, z) P(z | s)`. A cell is
/// flagged unobservable when some stratum with `P(z | s) > 0` never plays `a`.
pub fn backdoor_adjust(joint: &ObservationalJoint) -> Kernel {
    let mut k = Kernel::zeros(joint.n_s, joint.n_a, &joint.rewards);
    let tail = joint.tail();
    for s in 0..joint.n_s {
        let pz: Vec<f64> = (0..joint.n_z).map(|z| (0..joint.n_a).map(|a| joint.mass_sza(s, z, a)).sum()).collect();
        let ps: f64 = pz.iter().sum();
        if ps <= 0.0 {
            (0..joint.n_a).for_each(|a| k.mark_unobservable(s, a));
            continue;
        }
        for a in 0..joint.n_a {
            let mut row = vec![0.0; tail];
            let mut ok = true;
            for (z, &mz) in pz.iter().enumerate() {
                if mz <= 0.0 {
                    continue;
                }
                let msza = joint.mass_sza(s, z, a);
                if msza <= 0.0 {
                    ok = false;
                    break;
                }
                let w = mz / ps / msza;
                for m in 0..joint.n_m {
                    let i = joint.index(s, z, a, m);
                    for (acc, p) in row.iter_mut().zip(&joint.probs[i..i + tail]) {
                        *acc += w * p;
                    }
                }
            }
            if ok {
                k.row_mut(s, a).copy_from_slice(&row);
            } else {
                k.mark_unobservable(s, a);
            }
        }
    }
    k
}

/// Check that `A → M` fully mediates the action's effect and that the
/// confounder does not touch the mediator.
pub fn frontdoor_conformance(scm: &TabularScm) -> Result<(), CausalError> {
    if scm.n_m < 2 {
        return Err(CausalError::FrontDoor("no mediator (n_m = 1)".into()));
    }
    for s in 0..scm.n_s {
        for a in 0..scm.n_a {
            for u in 1..scm.n_u {
                for m in 0..scm.n_m {
                    if (scm.p_m(s, a, u, m) - scm.p_m(s, a, 0, m)).abs() > ROW_TOL {
                        return Err(CausalError::FrontDoor(format!("mediator depends on the confounder at s={s}, a={a}")));
                    }
                }
            }
        }
        for m in 0..scm.n_m {
            for u in 0..scm.n_u {
                let base = scm.outcome_row(s, 0, m, u);
                for a in 1..scm.n_a {
                    if scm.outcome_row(s, a, m, u).iter().zip(base).any(|(x, y)| (x - y).abs() > ROW_TOL) {
                        return Err(CausalError::FrontDoor(format!("direct action → outcome edge at s={s}, m={m}")));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Two-stage front-door estimate from an observational joint in which the
/// confounder is not recorded (`z` is summed out):
/// `Σ_m P(m | s, a) Σ_a' P(s', r | s, m, a') P(a' | s)`.
pub fn frontdoor_from_joint(joint: &ObservationalJoint) -> Kernel {
    let (n_a, n_m, tail) = (joint.n_a, joint.n_m, joint.tail());
    let mut k = Kernel::zeros(joint.n_s, n_a, &joint.rewards);
    for s in 0..joint.n_s {
        // J(s, a, m, ·) with z summed out.
        let mut jam = vec![0.0; n_a * n_m * tail];
        for z in 0..joint.n_z {
            for a in 0..n_a {
                for m in 0..n_m {
                    let i = joint.index(s, z, a, m);
                    let o = (a * n_m + m) * tail;
                    for (acc, p) in jam[o..o + tail].iter_mut().zip(&joint.probs[i..i + tail]) {
                        *acc += p;
                    }
                }
            }
        }
        let mass_am = |a: usize, m: usize| -> f64 { jam[(a * n_m + m) * tail..(a * n_m + m + 1) * tail].iter().sum() };
        let mass_a: Vec<f64> = (0..n_a).map(|a| (0..n_m).map(|m| mass_am(a, m)).sum()).collect();
        let ms: f64 = mass_a.iter().sum();
        for a in 0..n_a {
            if mass_a[a] <= 0.0 {
                k.mark_unobservable(s, a);
                continue;
            }
            let mut row = vec![0.0; tail];
            let mut ok = true;
            'm: for m in 0..n_m {
                let pm = mass_am(a, m) / mass_a[a];
                if pm <= 0.0 {
                    continue;
                }
                for a2 in 0..n_a {
                    let pa2 = mass_a[a2] / ms;
                    if pa2 <= 0.0 {
                        continue;
                    }
                    let denom = mass_am(a2, m);
                    if denom <= 0.0 {
                        ok = false;
                        break 'm;
                    }
                    let o = (a2 * n_m + m) * tail;
                    for (acc, p) in row.iter_mut().zip(&jam[o..o + tail]) {
                        *acc += pm * pa2 * p / denom;
                    }
                }
            }
            if ok {
                k.row_mut(s, a).copy_from_slice(&row);
            } else {
                k.mark_unobservable(s, a);
            }
        }
    }
    k
}

/// Front-door identification on an SCM whose confounder is unobserved.
/// Refuses SCMs that violate the front-door structure.
pub fn frontdoor_adjust(scm: &TabularScm) -> Result<Kernel, CausalError> {
    frontdoor_conformance(scm)?;
    let joint = ObservationalJoint::from_scm(scm, &ProxyModel::hidden(scm.n_u))?;
    Ok(frontdoor_from_joint(&joint))
}

/// Abduction posterior and counterfactual prediction for one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterfactual {
    /// `P(u | s, a, s', r)`.
    pub posterior: Vec<f64>,
    /// Counterfactual `P(s', r)` under the alternative action, `[s'][r]`.
    pub distribution: Vec<f64>,
}

/// Abduction–action–prediction: infer `P(u | s, a, s', r)`, replace the
/// action, and push the posterior through the outcome mechanism.
pub fn counterfactual_outcome(
    scm: &TabularScm,
    s: usize,
    a: usize,
    s2: usize,
    r: usize,
    alt_action: usize,
) -> Result<Counterfactual, CausalError> {
    if s >= scm.n_s || a >= scm.n_a || s2 >= scm.n_s || r >= scm.n_r() || alt_action >= scm.n_a {
        return Err(CausalError::Argument("transition index outside the SCM domains".into()));
    }
    let cell = s2 * scm.n_r() + r;
    let mut posterior: Vec<f64> =
        (0..scm.n_u).map(|u| scm.p_u(s, u) * scm.p_a(s, u, a) * scm.outcome_given_u(s, a, u)[cell]).collect();
    let total: f64 = posterior.iter().sum();
    if total <= 0.0 {
        return Err(CausalError::ZeroProbability);
    }
    posterior.iter_mut().for_each(|p| *p /= total);
    let mut distribution = vec![0.0; scm.n_s * scm.n_r()];
    for (u, &w) in posterior.iter().enumerate() {
        if w > 0.0 {
            for (acc, p) in distribution.iter_mut().zip(scm.outcome_given_u(s, alt_action, u)) {
                *acc += w * p;
            }
        }
    }
    Ok(Counterfactual { posterior, distribution })
}
