use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{sigmoid, softmax_in_place};
use super::{Graph, NumError, ParamId, ParamSet, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, output_activation: OutputActivation) -> Self {
        Self { layer_sizes, activation, output_activation }
    }

    pub fn validate(&self) -> Result<(), NumError> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(NumError::Spec(format!("bad layer sizes {:?}", self.layer_sizes)));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }
}

/// Fully connected network with parameters stored in a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    weights: Vec<ParamId>,
    biases: Vec<ParamId>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        spec: MlpSpec,
        params: &mut ParamSet,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self, NumError> {
        spec.validate()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in spec.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            weights.push(params.add(format!("{prefix}.w{l}"), Tensor::new(vec![fan_in, fan_out], data)?));
            biases.push(params.add(format!("{prefix}.b{l}"), Tensor::zeros(&[1, fan_out])));
        }
        Ok(Self { spec, weights, biases })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn weight(&self, layer: usize) -> ParamId {
        self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> ParamId {
        self.biases[layer]
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Recorded forward pass over an `[n, in]` batch.
    pub fn forward(&self, g: &mut Graph, params: &ParamSet, x: Var) -> Result<Var, NumError> {
        let (_, cols) = g.shape(x);
        if cols != self.spec.input_size() {
            return Err(NumError::Dimension { expected: self.spec.input_size(), got: cols });
        }
        let mut h = x;
        let last = self.weights.len() - 1;
        for l in 0..self.weights.len() {
            let w = g.param(params, self.weights[l]);
            let b = g.param(params, self.biases[l]);
            let z = g.matmul(h, w);
            h = g.add_bias(z, b);
            if l < last {
                h = match self.spec.activation {
                    Activation::Tanh => g.tanh(h),
                    Activation::Relu => g.relu(h),
                };
            }
        }
        Ok(match self.spec.output_activation {
            OutputActivation::Identity => h,
            OutputActivation::Sigmoid => g.sigmoid(h),
            OutputActivation::Softmax => g.softmax_rows(h),
        })
    }

    /// Unrecorded forward pass for one input row.
    pub fn forward_plain(&self, params: &ParamSet, x: &[f64]) -> Result<Vec<f64>, NumError> {
        if x.len() != self.spec.input_size() {
            return Err(NumError::Dimension { expected: self.spec.input_size(), got: x.len() });
        }
        let mut h = x.to_vec();
        let last = self.weights.len() - 1;
        for l in 0..self.weights.len() {
            let w = params.value(self.weights[l]);
            let b = params.value(self.biases[l]).data();
            let (k, m) = (w.rows(), w.cols());
            let mut z = b.to_vec();
            let wd = w.data();
            for p in 0..k {
                let hv = h[p];
                if hv == 0.0 {
                    continue;
                }
                for (zj, &wv) in z.iter_mut().zip(&wd[p * m..(p + 1) * m]) {
                    *zj += hv * wv;
                }
            }
            if l < last {
                match self.spec.activation {
                    Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
                    Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
                }
            }
            h = z;
        }
        match self.spec.output_activation {
            OutputActivation::Identity => {}
            OutputActivation::Sigmoid => h.iter_mut().for_each(|v| *v = sigmoid(*v)),
            OutputActivation::Softmax => softmax_in_place(&mut h),
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruSpec {
    pub input_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
}

impl GruSpec {
    pub fn validate(&self) -> Result<(), NumError> {
        if self.input_size == 0 || self.hidden_size == 0 || self.num_layers == 0 {
            return Err(NumError::Spec(format!("bad GRU spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct GruLayer {
    /// `[in, 3H]`, gate order reset, update, candidate.
    w_input: ParamId,
    /// `[H, 3H]`
    w_hidden: ParamId,
    b_input: ParamId,
    b_hidden: ParamId,
}

/// Stacked GRU with the usual reset/update/candidate gating:
///
/// ```text
/// r = σ(x Wir + bir + h Whr + bhr)
/// z = σ(x Wiz + biz + h Whz + bhz)
/// n = tanh(x Win + bin + r ⊙ (h Whn + bhn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    spec: GruSpec,
    layers: Vec<GruLayer>,
}

impl Gru {
    /// Uniform `±1/sqrt(H)` initialization for all weights and biases.
    pub fn new<R: Rng + ?Sized>(
        spec: GruSpec,
        params: &mut ParamSet,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self, NumError> {
        spec.validate()?;
        let h = spec.hidden_size;
        let bound = 1.0 / (h as f64).sqrt();
        let mut uniform = |shape: [usize; 2]| {
            let n = shape[0] * shape[1];
            Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-bound..bound)).collect())
        };
        let mut layers = Vec::new();
        for l in 0..spec.num_layers {
            let input = if l == 0 { spec.input_size } else { h };
            layers.push(GruLayer {
                w_input: params.add(format!("{prefix}.l{l}.w_input"), uniform([input, 3 * h])?),
                w_hidden: params.add(format!("{prefix}.l{l}.w_hidden"), uniform([h, 3 * h])?),
                b_input: params.add(format!("{prefix}.l{l}.b_input"), uniform([1, 3 * h])?),
                b_hidden: params.add(format!("{prefix}.l{l}.b_hidden"), uniform([1, 3 * h])?),
            });
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &GruSpec {
        &self.spec
    }

    /// All parameter ids, useful for zero-initialisation in tests.
    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| [l.w_input, l.w_hidden, l.b_input, l.b_hidden])
            .collect()
    }

    /// Recorded pass over a batch of sequences. `steps[t]` is `[B, in]`.
    /// When `masks` is given, `masks[t]` is a `[B, 1]` column of 0/1 and rows
    /// with a zero keep their previous hidden state (for ragged batches).
    /// Returns the top-layer hidden state after every step.
    pub fn forward_steps(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        steps: &[Var],
        masks: Option<&[Var]>,
    ) -> Result<Vec<Var>, NumError> {
        if steps.is_empty() {
            return Err(NumError::EmptySequence);
        }
        let batch = g.shape(steps[0]).0;
        let hs = self.spec.hidden_size;
        let mut hidden: Vec<Var> = (0..self.layers.len())
            .map(|_| g.constant(Tensor::zeros(&[batch, hs])))
            .collect();
        let bound: Vec<[Var; 4]> = self
            .layers
            .iter()
            .map(|l| {
                [
                    g.param(params, l.w_input),
                    g.param(params, l.w_hidden),
                    g.param(params, l.b_input),
                    g.param(params, l.b_hidden),
                ]
            })
            .collect();
        let mut tops = Vec::with_capacity(steps.len());
        for (t, &x) in steps.iter().enumerate() {
            let (rows, cols) = g.shape(x);
            if rows != batch || cols != self.spec.input_size {
                return Err(NumError::Dimension { expected: self.spec.input_size, got: cols });
            }
            let mut inp = x;
            for (l, [wi, wh, bi, bh]) in bound.iter().enumerate() {
                let h = hidden[l];
                let gi = g.matmul(inp, *wi);
                let gi = g.add_bias(gi, *bi);
                let gh = g.matmul(h, *wh);
                let gh = g.add_bias(gh, *bh);
                let (i_r, i_z, i_n) =
                    (g.slice_cols(gi, 0, hs), g.slice_cols(gi, hs, 2 * hs), g.slice_cols(gi, 2 * hs, 3 * hs));
                let (h_r, h_z, h_n) =
                    (g.slice_cols(gh, 0, hs), g.slice_cols(gh, hs, 2 * hs), g.slice_cols(gh, 2 * hs, 3 * hs));
                let r = g.add(i_r, h_r);
                let r = g.sigmoid(r);
                let z = g.add(i_z, h_z);
                let z = g.sigmoid(z);
                let rn = g.mul(r, h_n);
                let n = g.add(i_n, rn);
                let n = g.tanh(n);
                let keep = g.one_minus(z);
                let a = g.mul(keep, n);
                let b = g.mul(z, h);
                let mut h_new = g.add(a, b);
                if let Some(masks) = masks {
                    // h' = h + m (h_new - h)
                    let d = g.sub(h_new, h);
                    let d = g.mul_col(d, masks[t]);
                    h_new = g.add(h, d);
                }
                hidden[l] = h_new;
                inp = h_new;
            }
            tops.push(inp);
        }
        Ok(tops)
    }

    /// Final top-layer hidden state of one `[T, in]` sequence.
    pub fn forward_sequence(&self, g: &mut Graph, params: &ParamSet, sequence: &Tensor) -> Result<Var, NumError> {
        if sequence.cols() != self.spec.input_size {
            return Err(NumError::Dimension { expected: self.spec.input_size, got: sequence.cols() });
        }
        let steps: Vec<Var> =
            (0..sequence.rows()).map(|t| g.constant(Tensor::row(sequence.row_slice(t)))).collect();
        let tops = self.forward_steps(g, params, &steps, None)?;
        Ok(*tops.last().expect("non-empty"))
    }

    pub fn initial_state(&self) -> GruState {
        GruState { hidden: vec![vec![0.0; self.spec.hidden_size]; self.layers.len()] }
    }

    /// Unrecorded single step; returns the new top-layer hidden state.
    pub fn step_plain<'s>(&self, params: &ParamSet, state: &'s mut GruState, x: &[f64]) -> Result<&'s [f64], NumError> {
        if x.len() != self.spec.input_size {
            return Err(NumError::Dimension { expected: self.spec.input_size, got: x.len() });
        }
        let hs = self.spec.hidden_size;
        let mut inp = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let gi = affine(params, layer.w_input, layer.b_input, &inp);
            let h = &state.hidden[l];
            let gh = affine(params, layer.w_hidden, layer.b_hidden, h);
            let mut h_new = vec![0.0; hs];
            for j in 0..hs {
                let r = sigmoid(gi[j] + gh[j]);
                let z = sigmoid(gi[hs + j] + gh[hs + j]);
                let n = (gi[2 * hs + j] + r * gh[2 * hs + j]).tanh();
                h_new[j] = (1.0 - z) * n + z * h[j];
            }
            state.hidden[l] = h_new;
            inp = state.hidden[l].clone();
        }
        Ok(state.hidden.last().expect("layers"))
    }
}

fn affine(params: &ParamSet, w: ParamId, b: ParamId, x: &[f64]) -> Vec<f64> {
    let w = params.value(w);
    let m = w.cols();
    let mut out = params.value(b).data().to_vec();
    let wd = w.data();
    for (p, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(&wd[p * m..(p + 1) * m]) {
            *o += xv * wv;
        }
    }
    out
}

/// Carried hidden state for [`Gru::step_plain`].
#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    hidden: Vec<Vec<f64>>,
}

impl GruState {
    pub fn top(&self) -> &[f64] {
        self.hidden.last().expect("layers")
    }
}
