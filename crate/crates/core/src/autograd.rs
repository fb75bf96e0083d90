//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its forward
//! value, and [`Graph::backward`] walks the tape in reverse. Graphs are built
//! per forward pass and dropped afterwards. Parameters enter the tape through
//! [`Graph::param`], which binds a [`ParamStore`] entry to a leaf exactly once
//! per graph so shared weights (tied embeddings) accumulate their gradients.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis};

use crate::params::{ParamId, ParamStore};

pub type Matrix = Array2<f64>;

const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Matrix),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    NllSum {
        x: Var,
        targets: Vec<(usize, usize)>,
    },
    SqDist {
        x: Var,
        target: Matrix,
        scale: f64,
    },
    WeightedSum {
        x: Var,
        weights: Matrix,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bindings: HashMap<(u64, usize), Var>,
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that receives a gradient; used for inputs under test.
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a stored parameter. Repeated calls return the same leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let key = (store.uid(), id.index());
        if let Some(&v) = self.bindings.get(&key) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf, store.is_trainable());
        self.bindings.insert(key, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMulT(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add: shape mismatch");
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row: bias must be a single row");
        assert_eq!(r.ncols(), self.value(a).ncols(), "add_row: width mismatch");
        let value = self.value(a) + r;
        let rg = self.rg(a) || self.rg(row);
        self.push(value, Op::AddRow(a, row), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    /// Element-wise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Var {
        assert_eq!(self.value(a).dim(), c.dim(), "mul_const: shape mismatch");
        let value = self.value(a) * &c;
        let rg = self.rg(a);
        self.push(value, Op::MulConst(a, c), rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(gelu);
        let rg = self.rg(a);
        self.push(value, Op::Gelu(a), rg)
    }

    /// Row-wise layer normalization with affine `1×n` gamma and beta.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.dim();
        let mut xhat = Matrix::zeros((rows, cols));
        let mut inv_std = Vec::with_capacity(rows);
        for (i, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            for (j, v) in row.iter().enumerate() {
                xhat[[i, j]] = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let value = &xhat * self.value(gamma) + self.value(beta);
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    /// Row-wise softmax. With `causal`, entry `(i, j)` is masked out for `j > i`.
    pub fn softmax(&mut self, x: Var, causal: bool) -> Var {
        let xv = self.value(x);
        let mut value = xv.clone();
        for (i, mut row) in value.rows_mut().into_iter().enumerate() {
            let limit = if causal { (i + 1).min(row.len()) } else { row.len() };
            let max = row
                .iter()
                .take(limit)
                .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut sum = 0.0;
            for (j, v) in row.iter_mut().enumerate() {
                if j < limit {
                    *v = (*v - max).exp();
                    sum += *v;
                } else {
                    *v = 0.0;
                }
            }
            row.mapv_inplace(|v| v / sum);
        }
        let rg = self.rg(x);
        self.push(value, Op::Softmax(x), rg)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        let rg = self.rg(x);
        self.push(value, Op::LogSoftmax(x), rg)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice(s![.., start..start + len]).to_owned();
        let rg = self.rg(x);
        self.push(value, Op::SliceCols { x, start }, rg)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice(s![start..start + len, ..]).to_owned();
        let rg = self.rg(x);
        self.push(value, Op::SliceRows { x, start }, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows: width mismatch");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Selects rows of `table` (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut value = Matrix::zeros((ids.len(), t.ncols()));
        for (i, &id) in ids.iter().enumerate() {
            value.row_mut(i).assign(&t.row(id));
        }
        let rg = self.rg(table);
        self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    /// `-Σ x[r, c]` over the given `(row, col)` targets, as a `1×1` node.
    pub fn nll_sum(&mut self, x: Var, targets: &[(usize, usize)]) -> Var {
        let xv = self.value(x);
        let total: f64 = targets.iter().map(|&(r, c)| -xv[[r, c]]).sum();
        let rg = self.rg(x);
        self.push(
            Matrix::from_elem((1, 1), total),
            Op::NllSum {
                x,
                targets: targets.to_vec(),
            },
            rg,
        )
    }

    /// `scale · Σ (x − target)²`, as a `1×1` node.
    pub fn sq_dist(&mut self, x: Var, target: Matrix, scale: f64) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.dim(), target.dim(), "sq_dist: shape mismatch");
        let total = scale * (xv - &target).mapv(|d| d * d).sum();
        let rg = self.rg(x);
        self.push(
            Matrix::from_elem((1, 1), total),
            Op::SqDist { x, target, scale },
            rg,
        )
    }

    /// `Σ x ⊙ weights`, as a `1×1` node.
    pub fn weighted_sum(&mut self, x: Var, weights: Matrix) -> Var {
        let total = (self.value(x) * &weights).sum();
        let rg = self.rg(x);
        self.push(
            Matrix::from_elem((1, 1), total),
            Op::WeightedSum { x, weights },
            rg,
        )
    }

    /// Back-propagates from a `1×1` node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).dim(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::ones((1, 1)));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let d = g.dot(&self.value(*b).t());
                        self.acc(&mut grads, *a, d);
                    }
                    if self.rg(*b) {
                        let d = self.value(*a).t().dot(&g);
                        self.acc(&mut grads, *b, d);
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.rg(*a) {
                        let d = g.dot(self.value(*b));
                        self.acc(&mut grads, *a, d);
                    }
                    if self.rg(*b) {
                        let d = g.t().dot(self.value(*a));
                        self.acc(&mut grads, *b, d);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*b) {
                        self.acc(&mut grads, *b, g.clone());
                    }
                    self.acc(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    if self.rg(*row) {
                        let d = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        self.acc(&mut grads, *row, d);
                    }
                    self.acc(&mut grads, *a, g);
                }
                Op::Scale(a, f) => self.acc(&mut grads, *a, g * *f),
                Op::MulConst(a, c) => self.acc(&mut grads, *a, g * c),
                Op::Gelu(a) => {
                    let mut d = g;
                    ndarray::Zip::from(&mut d)
                        .and(self.value(*a))
                        .for_each(|d, &x| *d *= gelu_grad(x));
                    self.acc(&mut grads, *a, d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    if self.rg(*beta) {
                        let d = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        self.acc(&mut grads, *beta, d);
                    }
                    if self.rg(*gamma) {
                        let d = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                        self.acc(&mut grads, *gamma, d);
                    }
                    if self.rg(*x) {
                        let dxhat = &g * self.value(*gamma);
                        let n = xhat.ncols() as f64;
                        let mut dx = Matrix::zeros(xhat.dim());
                        for r in 0..xhat.nrows() {
                            let dh = dxhat.row(r);
                            let h = xhat.row(r);
                            let sum_dh = dh.sum();
                            let sum_dhh = dh.dot(&h);
                            let k = inv_std[r] / n;
                            for c in 0..xhat.ncols() {
                                dx[[r, c]] = k * (n * dh[c] - sum_dh - h[c] * sum_dhh);
                            }
                        }
                        self.acc(&mut grads, *x, dx);
                    }
                }
                Op::Softmax(x) => {
                    let p = &node.value;
                    let mut dx = &g * p;
                    for (mut row, prow) in dx.rows_mut().into_iter().zip(p.rows()) {
                        let dot = row.sum();
                        for (d, &pv) in row.iter_mut().zip(prow.iter()) {
                            *d -= pv * dot;
                        }
                    }
                    self.acc(&mut grads, *x, dx);
                }
                Op::LogSoftmax(x) => {
                    let y = &node.value;
                    let mut dx = g.clone();
                    for ((mut row, yrow), grow) in
                        dx.rows_mut().into_iter().zip(y.rows()).zip(g.rows())
                    {
                        let total = grow.sum();
                        for (d, &yv) in row.iter_mut().zip(yrow.iter()) {
                            *d -= yv.exp() * total;
                        }
                    }
                    self.acc(&mut grads, *x, dx);
                }
                Op::SliceCols { x, start } => {
                    let mut d = Matrix::zeros(self.value(*x).dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    self.acc(&mut grads, *x, d);
                }
                Op::SliceRows { x, start } => {
                    let mut d = Matrix::zeros(self.value(*x).dim());
                    d.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    self.acc(&mut grads, *x, d);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        if self.rg(p) {
                            let d = g.slice(s![.., offset..offset + w]).to_owned();
                            self.acc(&mut grads, p, d);
                        }
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let h = self.value(p).nrows();
                        if self.rg(p) {
                            let d = g.slice(s![offset..offset + h, ..]).to_owned();
                            self.acc(&mut grads, p, d);
                        }
                        offset += h;
                    }
                }
                Op::Gather { table, ids } => {
                    let mut d = Matrix::zeros(self.value(*table).dim());
                    for (i, &id) in ids.iter().enumerate() {
                        let mut row = d.row_mut(id);
                        row += &g.row(i);
                    }
                    self.acc(&mut grads, *table, d);
                }
                Op::NllSum { x, targets } => {
                    let scale = g[[0, 0]];
                    let mut d = Matrix::zeros(self.value(*x).dim());
                    for &(r, c) in targets {
                        d[[r, c]] -= scale;
                    }
                    self.acc(&mut grads, *x, d);
                }
                Op::SqDist { x, target, scale } => {
                    let k = 2.0 * scale * g[[0, 0]];
                    let d = (self.value(*x) - target) * k;
                    self.acc(&mut grads, *x, d);
                }
                Op::WeightedSum { x, weights } => {
                    let d = weights * g[[0, 0]];
                    self.acc(&mut grads, *x, d);
                }
            }
        }

        Gradients {
            grads,
            bindings: self.bindings.clone(),
        }
    }

    fn acc(&self, grads: &mut [Option<Matrix>], v: Var, delta: Matrix) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => *existing += &delta,
            slot => *slot = Some(delta),
        }
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_K * (x + GELU_C * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    bindings: HashMap<(u64, usize), Var>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for a stored parameter, if it was bound and trainable.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Option<&Matrix> {
        self.bindings
            .get(&(store.uid(), id.index()))
            .and_then(|v| self.wrt(*v))
    }

    /// Adds every gradient of `store`'s parameters into `acc` (indexed by id).
    pub fn accumulate(&self, store: &ParamStore, acc: &mut [Matrix], weight: f64) {
        for id in store.ids() {
            if let Some(g) = self.param(store, id) {
                acc[id.index()].scaled_add(weight, g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, rng_from_seed};

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        Matrix::from_shape_fn((rows, cols), |_| normal(&mut rng))
    }

    /// Central-difference check of d(loss)/d(input) for a graph builder.
    fn check<F>(inputs: Vec<Matrix>, build: F)
    where
        F: Fn(&mut Graph, &[Var]) -> Var,
    {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|m| g.variable(m.clone())).collect();
        let loss = build(&mut g, &vars);
        let grads = g.backward(loss);
        let h = 1e-5;
        for (k, input) in inputs.iter().enumerate() {
            let analytic = grads.wrt(vars[k]).cloned().unwrap_or_else(|| Matrix::zeros(input.dim()));
            for idx in 0..input.len() {
                let eval = |delta: f64| {
                    let mut perturbed = inputs.clone();
                    let flat = perturbed[k].as_slice_mut().unwrap();
                    flat[idx] += delta;
                    let mut g = Graph::new();
                    let vars: Vec<Var> = perturbed.into_iter().map(|m| g.variable(m)).collect();
                    let l = build(&mut g, &vars);
                    g.scalar(l)
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.as_slice().unwrap()[idx];
                let tol = 1e-6 * (1.0 + a.abs().max(numeric.abs()));
                assert!((a - numeric).abs() < tol, "input {k} idx {idx}: {a} vs {numeric}");
            }
        }
    }

    #[test]
    fn matmul_and_transpose_gradients() {
        let w = random(3, 2, 9);
        check(vec![random(4, 3, 1), random(3, 5, 2)], move |g, v| {
            let y = g.matmul(v[0], v[1]);
            g.weighted_sum(y, Matrix::from_elem((4, 5), 0.3) + &random(4, 5, 3))
        });
        check(vec![random(4, 3, 4), random(5, 3, 5)], move |g, v| {
            let y = g.matmul_t(v[0], v[1]);
            let c = g.constant(random(5, 2, 7));
            let y2 = g.matmul(y, c);
            let m = w.dot(&w.t());
            let m = m.pipe_const(g);
            let y3 = g.matmul(v[1], m);
            let l1 = g.weighted_sum(y2, random(4, 2, 6));
            let l2 = g.weighted_sum(y3, random(5, 3, 8));
            g.add(l1, l2)
        });
    }

    trait PipeConst {
        fn pipe_const(self, g: &mut Graph) -> Var;
    }
    impl PipeConst for Matrix {
        fn pipe_const(self, g: &mut Graph) -> Var {
            g.constant(self)
        }
    }

    #[test]
    fn layer_norm_gelu_gradients() {
        check(
            vec![random(3, 6, 10), random(1, 6, 11), random(1, 6, 12)],
            |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2]);
                let y = g.gelu(y);
                g.weighted_sum(y, random(3, 6, 13))
            },
        );
    }

    #[test]
    fn softmax_and_log_softmax_gradients() {
        check(vec![random(4, 4, 20)], |g, v| {
            let p = g.softmax(v[0], true);
            g.weighted_sum(p, random(4, 4, 21))
        });
        check(vec![random(3, 5, 22)], |g, v| {
            let p = g.softmax(v[0], false);
            g.weighted_sum(p, random(3, 5, 23))
        });
        check(vec![random(3, 7, 24)], |g, v| {
            let lp = g.log_softmax(v[0]);
            g.nll_sum(lp, &[(0, 1), (1, 6), (2, 2), (2, 2)])
        });
    }

    #[test]
    fn structural_op_gradients() {
        check(vec![random(3, 6, 30), random(2, 6, 31), random(1, 6, 32)], |g, v| {
            let a = g.slice_cols(v[0], 1, 3);
            let b = g.slice_cols(v[0], 4, 2);
            let c = g.concat_cols(&[b, a]);
            let r = g.concat_rows(&[v[0], v[1]]);
            let r = g.slice_rows(r, 1, 3);
            let r = g.add_row(r, v[2]);
            let r = g.scale(r, 0.7);
            let cm = g.mul_const(c, random(3, 5, 33));
            let l1 = g.weighted_sum(r, random(3, 6, 34));
            let l2 = g.sq_dist(cm, random(3, 5, 35), 1.5);
            g.add(l1, l2)
        });
        check(vec![random(5, 3, 40)], |g, v| {
            let e = g.gather_rows(v[0], &[4, 0, 4, 2]);
            g.weighted_sum(e, random(4, 3, 41))
        });
    }

    #[test]
    fn causal_softmax_masks_future() {
        let mut g = Graph::new();
        let x = g.constant(random(3, 3, 50));
        let p = g.softmax(x, true);
        let p = g.value(p);
        assert_eq!(p[[0, 1]], 0.0);
        assert_eq!(p[[0, 2]], 0.0);
        assert_eq!(p[[1, 2]], 0.0);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_param_accumulates() {
        let mut store = ParamStore::new(true);
        let id = store.add("w", random(2, 2, 60)).unwrap();
        let mut g = Graph::new();
        let a = g.param(&store, id);
        let b = g.param(&store, id);
        assert_eq!(a, b);
        let y = g.add(a, b);
        let l = g.weighted_sum(y, Matrix::ones((2, 2)));
        let grads = g.backward(l);
        assert_eq!(grads.param(&store, id).unwrap(), &Matrix::from_elem((2, 2), 2.0));
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let mut store = ParamStore::new(false);
        let id = store.add("w", random(2, 2, 61)).unwrap();
        let mut g = Graph::new();
        let w = g.param(&store, id);
        let x = g.variable(random(2, 2, 62));
        let y = g.matmul(x, w);
        let l = g.weighted_sum(y, Matrix::ones((2, 2)));
        let grads = g.backward(l);
        assert!(grads.param(&store, id).is_none());
        assert!(grads.wrt(x).is_some());
    }
}
