//! Reverse-mode automatic differentiation over an append-only node list.
//!
//! Nodes are recorded in creation order, which is already a topological
//! order, so backward is a single reverse sweep. Parameters enter the graph
//! through [`Graph::param`] and their gradients are written back into the
//! [`ParamStore`] with [`Gradients::accumulate_into`].

use super::kernels;
use super::{ParamId, ParamStore, SeededRng, Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    MaskedSoftmax {
        x: Var,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    Tanh(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Mse {
        pred: Var,
        target: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// One forward computation and its tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    dropout_rng: Option<SeededRng>,
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape {
        [c] => (1, *c),
        _ => {
            let c = *shape.last().unwrap();
            (shape.iter().product::<usize>() / c, c)
        }
    }
}

impl Graph {
    /// Evaluation-mode graph: dropout is the identity.
    pub fn new() -> Self {
        Self::default()
    }

    /// Training-mode graph: dropout draws its masks from `rng`.
    pub fn training(rng: SeededRng) -> Self {
        Self {
            dropout_rng: Some(rng),
            ..Self::default()
        }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, t: &Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: t.data().to_vec(),
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a tensor as a leaf; it is differentiable iff `t.requires_grad()`.
    pub fn input(&mut self, t: &Tensor) -> Var {
        self.leaf(t, t.requires_grad())
    }

    /// Records a non-differentiable constant.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var, TensorError> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t, false))
    }

    /// Leaf bound to a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_vars.len() <= id.0 {
            self.param_vars.resize(id.0 + 1, None);
        }
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let t = store.get(id);
        let v = self.leaf(t, t.requires_grad());
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shapes are valid")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    /// Adds the vector `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (_, cols) = rows_cols(self.shape(a));
        if self.value(row).len() != cols {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(row).to_vec(),
            });
        }
        let r = self.value(row).to_vec();
        let value = self
            .value(a)
            .chunks(cols)
            .flat_map(|chunk| chunk.iter().zip(&r).map(|(x, b)| x + b))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, value, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, value, Op::Scale(a, c), &[a])
    }

    fn matrix_dims(&self, op: &'static str, v: Var, other: Var) -> Result<(usize, usize), TensorError> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(TensorError::ShapeMismatch {
                op,
                lhs: s.to_vec(),
                rhs: self.shape(other).to_vec(),
            }),
        }
    }

    /// `a (m x k) * b (k x n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.matrix_dims("matmul", a, b)?;
        let (k2, n) = self.matrix_dims("matmul", b, a)?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.value(a), false, self.value(b), false, &mut out, 0.0);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a (m x k) * b^T` where `b` is `n x k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.matrix_dims("matmul_nt", a, b)?;
        let (n, k2) = self.matrix_dims("matmul_nt", b, a)?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                lhs: vec![m, k],
                rhs: vec![n, k2],
            });
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.value(a), false, self.value(b), true, &mut out, 0.0);
        Ok(self.push(vec![m, n], out, Op::MatMulNT(a, b), &[a, b]))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: shape.len(),
            });
        }
        let outer = shape[..axis].iter().product();
        let len = shape[axis];
        let inner = shape[axis + 1..].iter().product();
        let y = kernels::softmax_axis(self.value(x), outer, len, inner);
        Ok(self.push(
            shape,
            y,
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            },
            &[x],
        ))
    }

    /// Row softmax of a matrix where `allowed[i * cols + j]` selects the
    /// admissible entries; excluded entries receive exactly zero weight.
    pub fn masked_softmax(&mut self, x: Var, allowed: &[bool]) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let (_, cols) = rows_cols(&shape);
        if allowed.len() != self.value(x).len() {
            return Err(TensorError::ShapeMismatch {
                op: "masked_softmax",
                lhs: shape,
                rhs: vec![allowed.len()],
            });
        }
        let y = kernels::masked_softmax_rows(self.value(x), cols, allowed)
            .ok_or(TensorError::EmptyMaskRow)?;
        Ok(self.push(shape, y, Op::MaskedSoftmax { x }, &[x]))
    }

    /// Layer normalization over the last axis with learned `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let (_, cols) = rows_cols(&shape);
        for p in [gamma, beta] {
            if self.value(p).len() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: shape,
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let (y, xhat, rstd) =
            kernels::layer_norm_rows(self.value(x), cols, self.value(gamma), self.value(beta));
        Ok(self.push(
            shape,
            y,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| kernels::gelu(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, value, Op::Gelu(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, value, Op::Tanh(x), &[x])
    }

    /// Selects rows of a `vocab x width` table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let (rows, cols) = match self.shape(table) {
            [r, c] => (*r, *c),
            s => return Err(TensorError::InvalidShape(s.to_vec())),
        };
        let src = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfRange { index: id, len: rows });
            }
            out.extend_from_slice(&src[id * cols..(id + 1) * cols]);
        }
        if ids.is_empty() {
            return Err(TensorError::InvalidShape(vec![0, cols]));
        }
        Ok(self.push(
            vec![ids.len(), cols],
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Stacks matrices (or vectors, as single rows) vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let cols = rows_cols(self.shape(parts[0])).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = rows_cols(self.shape(p));
            if c != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            rows += r;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(vec![rows, cols], out, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let rows = rows_cols(self.shape(parts[0])).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = rows_cols(self.shape(p));
            if r != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        Ok(self.push(vec![rows, total], out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (rows, cols) = rows_cols(self.shape(x));
        if len == 0 || start + len > rows {
            return Err(TensorError::IndexOutOfRange {
                index: start + len,
                len: rows,
            });
        }
        let out = self.value(x)[start * cols..(start + len) * cols].to_vec();
        Ok(self.push(vec![len, cols], out, Op::SliceRows { x, start }, &[x]))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var, TensorError> {
        let (rows, cols) = rows_cols(self.shape(x));
        if width == 0 || start + width > cols {
            return Err(TensorError::IndexOutOfRange {
                index: start + width,
                len: cols,
            });
        }
        let src = self.value(x);
        let out = (0..rows)
            .flat_map(|r| src[r * cols + start..r * cols + start + width].iter().copied())
            .collect();
        Ok(self.push(vec![rows, width], out, Op::SliceCols { x, start }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        if shape.iter().product::<usize>() != self.value(x).len() || shape.contains(&0) {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape,
            });
        }
        let out = self.value(x).to_vec();
        Ok(self.push(shape, out, Op::Reshape(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(vec![1], vec![s], Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(vec![1], vec![m], Op::Mean(x), &[x])
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var, TensorError> {
        if target.len() != self.value(pred).len() {
            return Err(TensorError::ShapeMismatch {
                op: "mse",
                lhs: self.shape(pred).to_vec(),
                rhs: vec![target.len()],
            });
        }
        let v = self.value(pred);
        let loss = v
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / v.len() as f64;
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
            &[pred],
        ))
    }

    /// Mean cross-entropy of row-wise softmax(logits) against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let (rows, cols) = rows_cols(self.shape(logits));
        if targets.len() != rows {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: self.shape(logits).to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
            return Err(TensorError::IndexOutOfRange { index: bad, len: cols });
        }
        let probs = kernels::softmax_axis(self.value(logits), rows, cols, 1);
        let loss = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| {
                let p = probs[r * cols + t];
                // `f64::max` would silently replace a NaN probability.
                if p.is_nan() {
                    f64::NAN
                } else {
                    -p.max(f64::MIN_POSITIVE).ln()
                }
            })
            .sum::<f64>()
            / rows as f64;
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Inverted dropout; the identity in evaluation mode or when `rate == 0`.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Var {
        let Some(rng) = self.dropout_rng.as_mut() else {
            return x;
        };
        if rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.nodes[x.0].value.len())
            .map(|_| if rng.next_f64() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let value = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, value, Op::Dropout { x, mask }, &[x])
    }

    /// Reverse sweep from a scalar loss. Gradients are retained for leaves only.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let n = &self.nodes[loss.0];
        if n.value.len() != 1 {
            return Err(TensorError::NonScalarLoss(n.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if n.requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients {
            grads,
            params: self.param_vars.clone(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = acc(nodes, grads, v) {
                        d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = acc(nodes, grads, *a) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
                if let Some(d) = acc(nodes, grads, *b) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d -= g);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(d) = acc(nodes, grads, *a) {
                    for i in 0..d.len() {
                        d[i] += g[i] * vb[i];
                    }
                }
                if let Some(d) = acc(nodes, grads, *b) {
                    for i in 0..d.len() {
                        d[i] += g[i] * va[i];
                    }
                }
            }
            Op::AddRow(a, row) => {
                if let Some(d) = acc(nodes, grads, *a) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
                if let Some(d) = acc(nodes, grads, *row) {
                    let cols = d.len();
                    for chunk in g.chunks(cols) {
                        d.iter_mut().zip(chunk).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(d) = acc(nodes, grads, *a) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += c * g);
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                let n = nodes[b.0].shape[1];
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(d) = acc(nodes, grads, *a) {
                    kernels::gemm(m, n, k, g, false, vb, true, d, 1.0);
                }
                if let Some(d) = acc(nodes, grads, *b) {
                    kernels::gemm(k, m, n, va, true, g, false, d, 1.0);
                }
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                let n = nodes[b.0].shape[0];
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(d) = acc(nodes, grads, *a) {
                    kernels::gemm(m, n, k, g, false, vb, false, d, 1.0);
                }
                if let Some(d) = acc(nodes, grads, *b) {
                    kernels::gemm(n, m, k, g, true, va, false, d, 1.0);
                }
            }
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            } => {
                if let Some(d) = acc(nodes, grads, *x) {
                    kernels::softmax_backward(&node.value, g, d, *outer, *len, *inner);
                }
            }
            Op::MaskedSoftmax { x } => {
                let cols = *node.shape.last().unwrap();
                let rows = node.value.len() / cols;
                if let Some(d) = acc(nodes, grads, *x) {
                    kernels::softmax_backward(&node.value, g, d, rows, cols, 1);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let cols = *node.shape.last().unwrap();
                let gm = &nodes[gamma.0].value;
                if let Some(d) = acc(nodes, grads, *x) {
                    for (r, rs) in rstd.iter().enumerate() {
                        let span = r * cols..(r + 1) * cols;
                        let gr = &g[span.clone()];
                        let hr = &xhat[span.clone()];
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for c in 0..cols {
                            let dh = gr[c] * gm[c];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[c];
                        }
                        mean_dh /= cols as f64;
                        mean_dh_h /= cols as f64;
                        let dr = &mut d[span];
                        for c in 0..cols {
                            let dh = gr[c] * gm[c];
                            dr[c] += rs * (dh - mean_dh - hr[c] * mean_dh_h);
                        }
                    }
                }
                if let Some(d) = acc(nodes, grads, *gamma) {
                    for (gc, hc) in g.chunks(cols).zip(xhat.chunks(cols)) {
                        for c in 0..cols {
                            d[c] += gc[c] * hc[c];
                        }
                    }
                }
                if let Some(d) = acc(nodes, grads, *beta) {
                    for gc in g.chunks(cols) {
                        d.iter_mut().zip(gc).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Gelu(x) => {
                let vx = &nodes[x.0].value;
                if let Some(d) = acc(nodes, grads, *x) {
                    for i in 0..d.len() {
                        d[i] += g[i] * kernels::gelu_grad(vx[i]);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(d) = acc(nodes, grads, *x) {
                    for i in 0..d.len() {
                        d[i] += g[i] * (1.0 - node.value[i] * node.value[i]);
                    }
                }
            }
            Op::Gather { table, ids } => {
                if let Some(d) = acc(nodes, grads, *table) {
                    let cols = nodes[table.0].shape[1];
                    for (r, &id) in ids.iter().enumerate() {
                        let dst = &mut d[id * cols..(id + 1) * cols];
                        dst.iter_mut()
                            .zip(&g[r * cols..(r + 1) * cols])
                            .for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = nodes[p.0].value.len();
                    if let Some(d) = acc(nodes, grads, p) {
                        d.iter_mut()
                            .zip(&g[off..off + len])
                            .for_each(|(d, g)| *d += g);
                    }
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = *node.shape.last().unwrap();
                let rows = node.value.len() / total;
                let mut off = 0;
                for &p in parts {
                    let w = rows_cols(&nodes[p.0].shape).1;
                    if let Some(d) = acc(nodes, grads, p) {
                        for r in 0..rows {
                            for c in 0..w {
                                d[r * w + c] += g[r * total + off + c];
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::SliceRows { x, start } => {
                let cols = *node.shape.last().unwrap();
                if let Some(d) = acc(nodes, grads, *x) {
                    let off = start * cols;
                    d[off..off + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, g)| *d += g);
                }
            }
            Op::SliceCols { x, start } => {
                let width = node.shape[1];
                let cols = rows_cols(&nodes[x.0].shape).1;
                if let Some(d) = acc(nodes, grads, *x) {
                    for (r, gr) in g.chunks(width).enumerate() {
                        let dst = &mut d[r * cols + start..r * cols + start + width];
                        dst.iter_mut().zip(gr).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(d) = acc(nodes, grads, *x) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
            }
            Op::Sum(x) => {
                if let Some(d) = acc(nodes, grads, *x) {
                    d.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(d) = acc(nodes, grads, *x) {
                    let s = g[0] / d.len() as f64;
                    d.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::Mse { pred, target } => {
                let vp = &nodes[pred.0].value;
                if let Some(d) = acc(nodes, grads, *pred) {
                    let s = 2.0 * g[0] / vp.len() as f64;
                    for i in 0..d.len() {
                        d[i] += s * (vp[i] - target[i]);
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                if let Some(d) = acc(nodes, grads, *logits) {
                    let rows = targets.len();
                    let cols = probs.len() / rows;
                    let s = g[0] / rows as f64;
                    for (r, &t) in targets.iter().enumerate() {
                        for c in 0..cols {
                            let onehot = if c == t { 1.0 } else { 0.0 };
                            d[r * cols + c] += s * (probs[r * cols + c] - onehot);
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(d) = acc(nodes, grads, *x) {
                    for i in 0..d.len() {
                        d[i] += g[i] * mask[i];
                    }
                }
            }
        }
    }
}

fn acc<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    let src = &nodes[v.0];
    if !src.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; src.value.len()]))
}

/// Result of [`Graph::backward`]: gradients of every reachable differentiable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<Option<Var>>,
}

impl Gradients {
    /// `None` for nodes that are unreachable from the loss or not differentiable.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params
            .get(id.0)
            .copied()
            .flatten()
            .and_then(|v| self.get(v))
    }

    /// Adds parameter gradients into the store's grad buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for id in store.ids().collect::<Vec<_>>() {
            if let Some(g) = self.param(id) {
                store.get_mut(id).accumulate_grad(g);
            }
        }
    }
}
