use super::{NumError, ParamSet};

/// Adam optimizer state. Moment buffers are created lazily on the first step
/// so one state can be constructed before the parameter set is final.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Apply one bias-corrected Adam update using the gradients stored in
    /// `params`. Gradients are left untouched; callers clear them.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<(), NumError> {
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.grad.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len() {
            return Err(NumError::Shape(format!(
                "optimizer tracks {} tensors, parameter set has {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        for p in params.iter() {
            if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(NumError::NonFinite(format!("gradient of {}[{i}]", p.name)));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first_moment).zip(&mut self.second_moment) {
            if m.len() != p.grad.len() {
                return Err(NumError::Shape(format!("moment shape for {}", p.name)));
            }
            let data = p.value.data_mut();
            for i in 0..data.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                data[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
