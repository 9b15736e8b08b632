use serde::{Deserialize, Serialize};

use super::{NumError, Tensor};

/// Header string written at the top of every parameter checkpoint.
pub const CHECKPOINT_HEADER: &str = "crlbench-params-v1";

/// Index of a parameter inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// A trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
}

/// Named collection of trainable tensors. Gradients accumulate additively
/// until [`ParamSet::zero_grad`] is called.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    header: String,
    params: Vec<CheckpointEntry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = vec![0.0; value.len()];
        self.params.push(Parameter { name: name.into(), value, grad });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for p in &mut self.params {
                p.grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        norm
    }

    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            header: CHECKPOINT_HEADER.to_string(),
            params: self
                .params
                .iter()
                .map(|p| CheckpointEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NumError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| NumError::Checkpoint(e.to_string()))?;
        if ck.header != CHECKPOINT_HEADER {
            return Err(NumError::Checkpoint(format!("unknown header {:?}", ck.header)));
        }
        let mut set = ParamSet::new();
        for e in ck.params {
            set.add(e.name, Tensor::new(e.shape, e.data)?);
        }
        Ok(set)
    }

    /// Overwrite values from `other`, matching by name and shape.
    pub fn load_values(&mut self, other: &ParamSet) -> Result<(), NumError> {
        for p in &mut self.params {
            let src = other
                .params
                .iter()
                .find(|q| q.name == p.name)
                .ok_or_else(|| NumError::Checkpoint(format!("missing parameter {}", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(NumError::Checkpoint(format!("shape mismatch for {}", p.name)));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip_keeps_header_and_values() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::new(vec![2, 2], vec![1.0, -2.5, 3.25, 1e-9]).unwrap());
        ps.add("b", Tensor::row(&[0.5, 0.25]));
        let text = ps.to_json();
        assert!(text.contains(CHECKPOINT_HEADER));
        let back = ParamSet::from_json(&text).unwrap();
        assert_eq!(back, ps);
    }

    #[test]
    fn checkpoint_rejects_wrong_header() {
        let text = r#"{"header":"other","params":[]}"#;
        assert!(ParamSet::from_json(text).is_err());
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::row(&[0.0, 0.0]));
        ps.get_mut(id).grad = vec![3.0, 4.0];
        assert_eq!(ps.clip_grad_norm(1.0), 5.0);
        assert!((ps.grad_norm() - 1.0).abs() < 1e-12);
    }
}
