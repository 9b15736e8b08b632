//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every op eagerly. Values are computed on insertion and
//! [`Graph::backward`] walks the tape in reverse. Graphs are cheap and meant to
//! be rebuilt for every minibatch.

use super::tensor::{matmul_a_bt_acc, matmul_at_b_acc, matmul_into};
use super::{NumError, ParamId, ParamSet, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Abs(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    Pick(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    param: Option<ParamId>,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` if `v` does not
    /// influence the loss or does not require gradients.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.adjoints[v.0].as_deref()
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node { rows, cols, value, op, param: None, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf without gradient tracking.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let (r, c) = dims(&t);
        self.push(r, c, t.into_data(), Op::Leaf, false)
    }

    /// Leaf that receives a gradient but is not a parameter (inputs under test).
    pub fn input(&mut self, t: Tensor) -> Var {
        let (r, c) = dims(&t);
        self.push(r, c, t.into_data(), Op::Leaf, true)
    }

    /// Leaf bound to a parameter; its gradient is accumulated into the
    /// [`ParamSet`] by [`Graph::backward_into`].
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let t = params.value(id);
        let (r, c) = dims(t);
        let v = self.push(r, c, t.data().to_vec(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let n = &self.nodes[v.0];
        assert_eq!(n.value.len(), 1, "scalar() on non-scalar node");
        n.value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(vec![n.rows, n.cols], n.value.clone()).expect("node shape")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![0.0; n * m];
        matmul_into(&self.nodes[a.0].value, &self.nodes[b.0].value, n, k, m, &mut out);
        let ng = self.ng(a) || self.ng(b);
        self.push(n, m, out, Op::MatMul(a, b), ng)
    }

    /// Adds a `[1, m]` bias to every row of an `[n, m]` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(self.shape(bias), (1, m), "bias shape");
        let b = &self.nodes[bias.0].value;
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .chunks(m)
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        let ng = self.ng(a) || self.ng(bias);
        self.push(n, m, out, Op::AddBias(a, bias), ng)
    }

    fn zip_same(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!((n, m), self.shape(b), "elementwise shape mismatch");
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(n, m, out, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, f64::min, Op::Minimum(a, b))
    }

    /// Multiplies each row of `a` (`[n, m]`) by the matching entry of `col` (`[n, 1]`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(self.shape(col), (n, 1), "column shape");
        let c = &self.nodes[col.0].value;
        let out = self.nodes[a.0]
            .value
            .chunks(m)
            .zip(c)
            .flat_map(|(row, &s)| row.iter().map(move |x| x * s))
            .collect();
        let ng = self.ng(a) || self.ng(col);
        self.push(n, m, out, Op::MulCol(a, col), ng)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (n, m) = self.shape(a);
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        let ng = self.ng(a);
        self.push(n, m, out, op, ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x + s, Op::AddScalar(a))
    }

    /// `1 - a`, used by the GRU update gate.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.map(a, f64::ln, Op::Ln(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, f64::abs, Op::Abs(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let mut out = self.nodes[a.0].value.clone();
        for row in out.chunks_mut(m) {
            softmax_in_place(row);
        }
        let ng = self.ng(a);
        self.push(n, m, out, Op::SoftmaxRows(a), ng)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let mut out = self.nodes[a.0].value.clone();
        for row in out.chunks_mut(m) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let ng = self.ng(a);
        self.push(n, m, out, Op::LogSoftmaxRows(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        let ng = self.ng(a);
        self.push(1, 1, vec![s], Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let ng = self.ng(a);
        self.push(1, 1, vec![s], Op::Mean(a), ng)
    }

    /// Row sums: `[n, m] -> [n, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let out = self.nodes[a.0].value.chunks(m).map(|r| r.iter().sum()).collect();
        let ng = self.ng(a);
        self.push(n, 1, out, Op::SumCols(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let n = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.shape(p);
                assert_eq!(r, n, "concat row mismatch");
                c
            })
            .collect();
        let m: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[p.0].value[i * w..(i + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(n, m, out, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (n, m) = self.shape(a);
        assert!(start < end && end <= m, "slice {start}..{end} of {m} columns");
        let out = self.nodes[a.0].value.chunks(m).flat_map(|r| r[start..end].iter().copied()).collect();
        let ng = self.ng(a);
        self.push(n, end - start, out, Op::SliceCols(a, start, end), ng)
    }

    /// `out[i] = a[i, idx[i]]`, shape `[n, 1]`.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(idx.len(), n, "pick index length");
        let v = &self.nodes[a.0].value;
        let out = idx
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                assert!(j < m, "pick index {j} out of {m}");
                v[i * m + j]
            })
            .collect();
        let ng = self.ng(a);
        self.push(n, 1, out, Op::Pick(a, idx.to_vec()), ng)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumError> {
        let ln = &self.nodes[loss.0];
        if ln.value.len() != 1 {
            return Err(NumError::NonScalarLoss(ln.rows, ln.cols));
        }
        if !ln.value[0].is_finite() {
            return Err(NumError::NonFinite("loss".into()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut adj);
            adj[i] = Some(g);
        }
        for (i, a) in adj.iter().enumerate() {
            if let Some(a) = a {
                if a.iter().any(|x| !x.is_finite()) {
                    return Err(NumError::NonFinite(format!("gradient at node {i}")));
                }
            }
        }
        Ok(Gradients { adjoints: adj })
    }

    /// Backward pass that adds parameter gradients into `params`.
    pub fn backward_into(&self, loss: Var, params: &mut ParamSet) -> Result<(), NumError> {
        let grads = self.backward(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Some(pid), Some(g)) = (node.param, grads.adjoints[i].as_ref()) {
                for (acc, x) in params.get_mut(pid).grad.iter_mut().zip(g) {
                    *acc += x;
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].needs_grad {
                return;
            }
            let slot = adj[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(slot);
        };
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = (nodes[a.0].rows, nodes[a.0].cols);
                let m = nodes[b.0].cols;
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &mut |s| matmul_a_bt_acc(g, bv, n, k, m, s));
                acc(*b, &mut |s| matmul_at_b_acc(av, g, n, k, m, s));
            }
            Op::AddBias(a, b) => {
                let m = node.cols;
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |s| {
                    for row in g.chunks(m) {
                        s.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * av[i];
                    }
                });
            }
            Op::MulCol(a, c) => {
                let m = node.cols;
                let (av, cv) = (&nodes[a.0].value, &nodes[c.0].value);
                acc(*a, &mut |s| {
                    for (i, (srow, grow)) in s.chunks_mut(m).zip(g.chunks(m)).enumerate() {
                        srow.iter_mut().zip(grow).for_each(|(x, y)| *x += y * cv[i]);
                    }
                });
                acc(*c, &mut |s| {
                    for (i, (arow, grow)) in av.chunks(m).zip(g.chunks(m)).enumerate() {
                        s[i] += arow.iter().zip(grow).map(|(x, y)| x * y).sum::<f64>();
                    }
                });
            }
            Op::Scale(a, k) => acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y * k)),
            Op::AddScalar(a) => acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y)),
            Op::Tanh(a) => acc(*a, &mut |s| {
                for i in 0..s.len() {
                    s[i] += g[i] * (1.0 - out[i] * out[i]);
                }
            }),
            Op::Relu(a) => {
                let av = &nodes[a.0].value;
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        if av[i] > 0.0 {
                            s[i] += g[i];
                        }
                    }
                })
            }
            Op::Sigmoid(a) => acc(*a, &mut |s| {
                for i in 0..s.len() {
                    s[i] += g[i] * out[i] * (1.0 - out[i]);
                }
            }),
            Op::Exp(a) => acc(*a, &mut |s| {
                for i in 0..s.len() {
                    s[i] += g[i] * out[i];
                }
            }),
            Op::Ln(a) => {
                let av = &nodes[a.0].value;
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] / av[i];
                    }
                })
            }
            Op::Square(a) => {
                let av = &nodes[a.0].value;
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += 2.0 * g[i] * av[i];
                    }
                })
            }
            Op::Abs(a) => {
                let av = &nodes[a.0].value;
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        if av[i] != 0.0 {
                            s[i] += g[i] * av[i].signum();
                        }
                    }
                })
            }
            Op::SoftmaxRows(a) => {
                let m = node.cols;
                acc(*a, &mut |s| {
                    for ((srow, grow), yrow) in s.chunks_mut(m).zip(g.chunks(m)).zip(out.chunks(m)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                        for j in 0..m {
                            srow[j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                })
            }
            Op::LogSoftmaxRows(a) => {
                let m = node.cols;
                acc(*a, &mut |s| {
                    for ((srow, grow), yrow) in s.chunks_mut(m).zip(g.chunks(m)).zip(out.chunks(m)) {
                        let gs: f64 = grow.iter().sum();
                        for j in 0..m {
                            srow[j] += grow[j] - yrow[j].exp() * gs;
                        }
                    }
                })
            }
            Op::Sum(a) => acc(*a, &mut |s| s.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => {
                let n = nodes[a.0].value.len() as f64;
                acc(*a, &mut |s| s.iter_mut().for_each(|x| *x += g[0] / n))
            }
            Op::SumCols(a) => {
                let m = nodes[a.0].cols;
                acc(*a, &mut |s| {
                    for (i, srow) in s.chunks_mut(m).enumerate() {
                        srow.iter_mut().for_each(|x| *x += g[i]);
                    }
                })
            }
            Op::Clamp(a, lo, hi) => {
                let av = &nodes[a.0].value;
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        if av[i] >= *lo && av[i] <= *hi {
                            s[i] += g[i];
                        }
                    }
                })
            }
            Op::Minimum(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        if av[i] <= bv[i] {
                            s[i] += g[i];
                        }
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..s.len() {
                        if av[i] > bv[i] {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let m = node.cols;
                let mut offset = 0;
                for p in parts {
                    let w = nodes[p.0].cols;
                    acc(*p, &mut |s| {
                        for (srow, grow) in s.chunks_mut(w).zip(g.chunks(m)) {
                            srow.iter_mut().zip(&grow[offset..offset + w]).for_each(|(x, y)| *x += y);
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols(a, start, end) => {
                let m = nodes[a.0].cols;
                let w = end - start;
                acc(*a, &mut |s| {
                    for (srow, grow) in s.chunks_mut(m).zip(g.chunks(w)) {
                        srow[*start..*end].iter_mut().zip(grow).for_each(|(x, y)| *x += y);
                    }
                })
            }
            Op::Pick(a, idx) => {
                let m = nodes[a.0].cols;
                acc(*a, &mut |s| {
                    for (i, &j) in idx.iter().enumerate() {
                        s[i * m + j] += g[i];
                    }
                })
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in row.iter_mut() {
        *x = (*x - mx).exp();
        z += *x;
    }
    row.iter_mut().for_each(|x| *x /= z);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(3.0));
        let y = g.square(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(x).unwrap(), &[6.0]);
    }

    #[test]
    fn linear_sum_gradient_is_input_outer_structure() {
        // loss = sum(x W): dL/dW[p, j] = x[p] for every column j.
        let mut ps = ParamSet::new();
        let wid = ps.add("w", Tensor::new(vec![3, 2], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap());
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(&[1.0, -2.0, 3.0]));
        let w = g.param(&ps, wid);
        let y = g.matmul(x, w);
        let loss = g.sum(y);
        g.backward_into(loss, &mut ps).unwrap();
        assert_eq!(ps.get(wid).grad, vec![1.0, 1.0, -2.0, -2.0, 3.0, 3.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.input(Tensor::row(&[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(NumError::NonScalarLoss(1, 2))));
    }

    #[test]
    fn backward_twice_doubles_gradients() {
        let mut ps = ParamSet::new();
        let wid = ps.add("w", Tensor::row(&[0.3, -0.7]));
        let mut g = Graph::new();
        let w = g.param(&ps, wid);
        let sq = g.square(w);
        let loss = g.sum(sq);
        g.backward_into(loss, &mut ps).unwrap();
        let once = ps.get(wid).grad.clone();
        g.backward_into(loss, &mut ps).unwrap();
        let twice = &ps.get(wid).grad;
        for (a, b) in once.iter().zip(twice) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_positive() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![2, 3], vec![300.0, 290.0, 2.0, 0.0, 0.0, 0.0]).unwrap());
        let y = g.softmax_rows(x);
        for row in g.value(y).chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(2.0));
        let x = g.input(Tensor::scalar(1.5));
        let y = g.mul(c, x);
        let grads = g.backward(y).unwrap();
        assert!(grads.wrt(c).is_none());
        assert_eq!(grads.wrt(x).unwrap(), &[2.0]);
    }
}
