use super::RlError;

/// Generalized advantage estimation. `values` carries one bootstrap entry
/// past the end; `dones[t]` cuts the recursion after step `t`.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(RlError::Length(format!(
            "{n} rewards, {} values, {} dones (values needs one bootstrap entry)",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Mean of `−min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn ppo_clip_loss(ratios: &[f64], advantages: &[f64], clip_epsilon: f64) -> Result<f64, RlError> {
    if ratios.len() != advantages.len() || ratios.is_empty() {
        return Err(RlError::Length(format!("{} ratios vs {} advantages", ratios.len(), advantages.len())));
    }
    let total: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| clip_term(r, a, clip_epsilon))
        .sum();
    Ok(total / ratios.len() as f64)
}

/// Per-sample clipped surrogate loss.
pub fn clip_term(ratio: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
    -(ratio * advantage).min(clipped * advantage)
}

/// Shift to mean 0 and scale to std 1 (left alone when nearly constant).
pub fn normalize(xs: &mut [f64]) {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    for x in xs.iter_mut() {
        *x = (*x - mean) / (sd + 1e-8);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undiscounted_gae_is_return_to_go() {
        let (a, r) = gae(&[1.0, 1.0, 1.0], &[0.0; 4], &[false, false, true], 1.0, 1.0).unwrap();
        assert_eq!(a, vec![3.0, 2.0, 1.0]);
        assert_eq!(r, a);
    }

    #[test]
    fn myopic_gae_is_td_error_without_bootstrap() {
        let (a, _) = gae(&[1.0, 2.0], &[0.5, 0.25, 9.0], &[false, false], 0.0, 0.95).unwrap();
        assert_eq!(a, vec![0.5, 1.75]);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_term(1.0, 1.0, 0.2), -1.0);
        assert!((clip_term(2.0, 1.0, 0.2) + 1.2).abs() < 1e-12);
        assert!((clip_term(0.5, -1.0, 0.2) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(gae(&[1.0], &[0.0], &[false], 0.9, 0.9).is_err());
        assert!(ppo_clip_loss(&[1.0], &[], 0.2).is_err());
    }
}
