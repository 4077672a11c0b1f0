//! Tape-based reverse-mode differentiation.
//!
//! Every forward op pushes a node holding its value. Nodes whose inputs
//! need gradients also remember how they were produced; `backward` walks
//! the tape once in reverse and hands back gradients for every leaf that
//! asked for one. The tape is single-use: after `backward` it is cleared
//! and a second call fails.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::AutodiffError;
use crate::tensor::{self, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Stable identifier for a model parameter bound onto a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Local gradient rule for [`Tape::custom`]: receives the input values, the
/// output value and the output gradient, returns one gradient per input.
pub type BackwardRule = Box<dyn Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Tensor> + Send + Sync>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Pick {
        x: Var,
        idx: Vec<usize>,
    },
    Sum(Var),
    Clamp {
        x: Var,
        lo: f64,
        hi: f64,
    },
    Minimum(Var, Var),
    Custom {
        inputs: Vec<Var>,
        rule: BackwardRule,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    param: Option<ParamId>,
    op: Op,
}

/// Gradients produced by one backward pass.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    leaves: BTreeMap<usize, Tensor>,
    params: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient for a leaf variable that required one.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(&v.0)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    /// Parameter gradient, or zeros of `shape` when the parameter never
    /// reached the tape.
    pub fn param_or_zeros(&self, id: ParamId, shape: &[usize]) -> Tensor {
        self.params
            .get(&id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    pub fn into_params(self) -> BTreeMap<ParamId, Tensor> {
        self.params
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            param: None,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        let v = self.leaf(value, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    fn push(
        &mut self,
        name: &'static str,
        value: Tensor,
        inputs: &[Var],
        op: Op,
    ) -> Result<Var, AutodiffError> {
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            param: None,
            op: if requires_grad { op } else { Op::Leaf },
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn unary_map(
        &mut self,
        name: &'static str,
        x: Var,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(name, value, &[x], op)
    }

    fn same_shape(&self, name: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
        if sa != sb {
            return Err(mismatch(name, sa, sb));
        }
        Ok(())
    }

    fn zip_map(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        self.same_shape(name, a, b)?;
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(name, value, &[a, b], op)
    }

    /// Matrix product of two 2-D tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = tensor::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(vec![m, n], data)?;
        self.push("matmul", value, &[a, b], Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let s = self.value(x).shape();
        if s.len() != 2 {
            return Err(mismatch("transpose", s, &[0, 0]));
        }
        let (m, n) = (s[0], s[1]);
        let src = self.value(x).data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let value = Tensor::new(vec![n, m], data)?;
        self.push("transpose", value, &[x], Op::Transpose(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_map("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_map("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_map("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a vector along the last dimension of `x` (bias broadcast over
    /// every leading index).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (sx, sb) = (self.value(x).shape(), self.value(bias).shape());
        let cols = *sx.last().unwrap();
        if sb.len() != 1 || sb[0] != cols {
            return Err(mismatch("add_bias", sx, sb));
        }
        let bv = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(cols)
            .flat_map(|row| row.iter().zip(bv).map(|(a, b)| a + b))
            .collect();
        let value = Tensor::new(sx.to_vec(), data)?;
        self.push("add_bias", value, &[x, bias], Op::AddBias(x, bias))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        self.unary_map("scale", x, |v| v * c, Op::Scale(x, c))
    }

    pub fn neg(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.scale(x, -1.0)
    }

    /// `x + c` for a constant `c`.
    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        self.unary_map("add_scalar", x, |v| v + c, Op::Shift(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.unary_map("exp", x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.unary_map("log", x, f64::ln, Op::Log(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.unary_map("relu", x, |v| v.max(0.0), Op::Relu(x))
    }

    /// Tanh approximation of GELU; smooth everywhere, unlike ReLU.
    pub fn gelu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.unary_map("gelu", x, gelu, Op::Gelu(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var, AutodiffError> {
        self.unary_map("clamp", x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_map("minimum", a, b, f64::min, Op::Minimum(a, b))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let (_, cols) = xv.as_matrix();
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(cols) {
            tensor::softmax_in_place(row);
        }
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("softmax_rows", value, &[x], Op::SoftmaxRows(x))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let (_, cols) = xv.as_matrix();
        let data = xv
            .data()
            .chunks(cols)
            .flat_map(tensor::log_softmax)
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("log_softmax_rows", value, &[x], Op::LogSoftmaxRows(x))
    }

    pub fn layer_norm(
        &mut self,
        x: Var,
        gain: Var,
        bias: Var,
        eps: f64,
    ) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let (rows, cols) = xv.as_matrix();
        for p in [gain, bias] {
            let s = self.value(p).shape();
            if s.len() != 1 || s[0] != cols {
                return Err(mismatch("layer_norm", xv.shape(), s));
            }
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xv.data()[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for c in 0..cols {
                let h = (row[c] - mean) * inv;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g[c] + b[c];
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        self.push(
            "layer_norm",
            value,
            &[x, gain, bias],
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Embedding lookup: rows `ids` of a `[V, d]` table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutodiffError> {
        let tv = self.value(table);
        let s = tv.shape();
        if s.len() != 2 || ids.is_empty() || ids.iter().any(|&i| i >= s[0]) {
            return Err(mismatch("gather_rows", s, &[ids.len()]));
        }
        let d = s[1];
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&tv.data()[i * d..(i + 1) * d]);
        }
        let value = Tensor::new(vec![ids.len(), d], data)?;
        self.push(
            "gather_rows",
            value,
            &[table],
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 2 || len == 0 || start + len > s[1] {
            return Err(mismatch("slice_cols", s, &[start, len]));
        }
        let (rows, cols) = (s[0], s[1]);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&xv.data()[r * cols + start..r * cols + start + len]);
        }
        let value = Tensor::new(vec![rows, len], data)?;
        self.push("slice_cols", value, &[x], Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = self.value(parts[0]).shape().to_vec();
        if first.len() != 2 {
            return Err(mismatch("concat_cols", &first, &[]));
        }
        let rows = first[0];
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[0] != rows {
                return Err(mismatch("concat_cols", &first, s));
            }
            total += s[1];
        }
        let mut data = vec![0.0; rows * total];
        let mut off = 0;
        for &p in parts {
            let pv = self.value(p);
            let c = pv.shape()[1];
            for r in 0..rows {
                data[r * total + off..r * total + off + c]
                    .copy_from_slice(&pv.data()[r * c..(r + 1) * c]);
            }
            off += c;
        }
        let value = Tensor::new(vec![rows, total], data)?;
        self.push("concat_cols", value, parts, Op::ConcatCols(parts.to_vec()))
    }

    /// Picks `x[r, idx[r]]` for every row `r`, giving a vector.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let (rows, cols) = xv.as_matrix();
        if idx.len() != rows || idx.iter().any(|&i| i >= cols) {
            return Err(mismatch("pick", xv.shape(), &[idx.len()]));
        }
        let data = idx
            .iter()
            .enumerate()
            .map(|(r, &c)| xv.data()[r * cols + c])
            .collect();
        let value = Tensor::new(vec![rows], data)?;
        self.push(
            "pick",
            value,
            &[x],
            Op::Pick {
                x,
                idx: idx.to_vec(),
            },
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let s: f64 = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), &[x], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// Records an op with a caller-supplied forward value and gradient rule.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        forward: impl FnOnce(&[&Tensor]) -> Tensor,
        rule: BackwardRule,
    ) -> Result<Var, AutodiffError> {
        let vals: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
        let value = forward(&vals);
        self.push(
            "custom",
            value,
            inputs,
            Op::Custom {
                inputs: inputs.to_vec(),
                rule,
            },
        )
    }

    /// Reverse pass from a scalar `loss`. Consumes the recorded graph.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.consumed {
            return Err(AutodiffError::TapeConsumed);
        }
        if self.nodes.is_empty() {
            return Err(AutodiffError::EmptyTape);
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        self.consumed = true;
        let nodes = std::mem::take(&mut self.nodes);
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);

        let mut out = Gradients::default();
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                if matches!(node.op, Op::Leaf) {
                    record_leaf(&mut out, i, node, vec![0.0; node.value.len()]);
                }
                continue;
            };
            backprop(&nodes, &mut grads, i, g, &mut out)?;
        }
        // Leaves created after the loss never influence it.
        for (i, node) in nodes.iter().enumerate().skip(loss.0 + 1) {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                record_leaf(&mut out, i, node, vec![0.0; node.value.len()]);
            }
        }
        Ok(out)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn record_leaf(out: &mut Gradients, i: usize, node: &Node, g: Vec<f64>) {
    let t = Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape");
    if let Some(id) = node.param {
        match out.params.get_mut(&id) {
            // The same parameter bound twice accumulates.
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                    *a += b;
                }
            }
            None => {
                out.params.insert(id, t.clone());
            }
        }
    }
    out.leaves.insert(i, t);
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    if !nodes[v.0].requires_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn backprop(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    i: usize,
    g: Vec<f64>,
    out: &mut Gradients,
) -> Result<(), AutodiffError> {
    let node = &nodes[i];
    let val = |v: Var| &nodes[v.0].value;
    match &node.op {
        Op::Leaf => record_leaf(out, i, node, g),
        Op::MatMul(a, b) => {
            let (sa, sb) = (val(*a).shape(), val(*b).shape());
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            if nodes[a.0].requires_grad {
                let mut ga = vec![0.0; m * k];
                tensor::matmul_a_bt_acc(&g, val(*b).data(), &mut ga, m, n, k);
                accumulate(nodes, grads, *a, &ga);
            }
            if nodes[b.0].requires_grad {
                let mut gb = vec![0.0; k * n];
                tensor::matmul_at_b_acc(val(*a).data(), &g, &mut gb, m, k, n);
                accumulate(nodes, grads, *b, &gb);
            }
        }
        Op::Transpose(x) => {
            let s = val(*x).shape();
            let (m, n) = (s[0], s[1]);
            let mut gx = vec![0.0; m * n];
            for r in 0..m {
                for c in 0..n {
                    gx[r * n + c] = g[c * m + r];
                }
            }
            accumulate(nodes, grads, *x, &gx);
        }
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, &g);
            accumulate(nodes, grads, *b, &g);
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, &g);
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            accumulate(nodes, grads, *b, &neg);
        }
        Op::Mul(a, b) => {
            let ga: Vec<f64> = g.iter().zip(val(*b).data()).map(|(x, y)| x * y).collect();
            let gb: Vec<f64> = g.iter().zip(val(*a).data()).map(|(x, y)| x * y).collect();
            accumulate(nodes, grads, *a, &ga);
            accumulate(nodes, grads, *b, &gb);
        }
        Op::AddBias(x, b) => {
            accumulate(nodes, grads, *x, &g);
            let cols = val(*b).len();
            let mut gb = vec![0.0; cols];
            for row in g.chunks(cols) {
                for (acc, v) in gb.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            accumulate(nodes, grads, *b, &gb);
        }
        Op::Scale(x, c) => {
            let gx: Vec<f64> = g.iter().map(|v| v * c).collect();
            accumulate(nodes, grads, *x, &gx);
        }
        Op::Shift(x) => accumulate(nodes, grads, *x, &g),
        Op::Exp(x) => {
            let gx: Vec<f64> = g
                .iter()
                .zip(node.value.data())
                .map(|(a, y)| a * y)
                .collect();
            accumulate(nodes, grads, *x, &gx);
        }
        Op::Log(x) => {
            let gx: Vec<f64> = g.iter().zip(val(*x).data()).map(|(a, v)| a / v).collect();
            accumulate(nodes, grads, *x, &gx);
        }
        Op::Relu(x) => {
            let gx: Vec<f64> = g
                .iter()
                .zip(val(*x).data())
                .map(|(a, &v)| if v > 0.0 { *a } else { 0.0 })
                .collect();
            accumulate(nodes, grads, *x, &gx);
        }
        Op::Gelu(x) => {
            let gx: Vec<f64> = g
                .iter()
                .zip(val(*x).data())
                .map(|(a, &v)| a * gelu_grad(v))
                .collect();
            accumulate(nodes, grads, *x, &gx);
        }
        Op::Clamp { x, lo, hi } => {
            let gx: Vec<f64> = g
                .iter()
                .zip(val(*x).data())
                .map(|(a, &v)| if v >= *lo && v <= *hi { *a } else { 0.0 })
                .collect();
            accumulate(nodes, grads, *x, &gx);
        }
        Op::Minimum(a, b) => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            let mut ga = vec![0.0; g.len()];
            let mut gb = vec![0.0; g.len()];
            for j in 0..g.len() {
                if av[j] <= bv[j] {
                    ga[j] = g[j];
                } else {
                    gb[j] = g[j];
                }
            }
            accumulate(nodes, grads, *a, &ga);
            accumulate(nodes, grads, *b, &gb);
        }
        Op::SoftmaxRows(x) => {
            let y = node.value.data();
            let (_, cols) = node.value.as_matrix();
            let mut gx = vec![0.0; y.len()];
            for ((grow, yrow), out_row) in g.chunks(cols).zip(y.chunks(cols)).zip(gx.chunks_mut(cols)) {
                let s = tensor::dot(grow, yrow);
                for c in 0..cols {
                    out_row[c] = yrow[c] * (grow[c] - s);
                }
            }
            accumulate(nodes, grads, *x, &gx);
        }
        Op::LogSoftmaxRows(x) => {
            let y = node.value.data();
            let (_, cols) = node.value.as_matrix();
            let mut gx = vec![0.0; y.len()];
            for ((grow, yrow), out_row) in g.chunks(cols).zip(y.chunks(cols)).zip(gx.chunks_mut(cols)) {
                let s: f64 = grow.iter().sum();
                for c in 0..cols {
                    out_row[c] = grow[c] - yrow[c].exp() * s;
                }
            }
            accumulate(nodes, grads, *x, &gx);
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let gv = val(*gain).data();
            let cols = gv.len();
            let rows = inv_std.len();
            let mut gx = vec![0.0; rows * cols];
            let mut gg = vec![0.0; cols];
            let mut gb = vec![0.0; cols];
            let n = cols as f64;
            for r in 0..rows {
                let grow = &g[r * cols..(r + 1) * cols];
                let hrow = &xhat[r * cols..(r + 1) * cols];
                let mut sum_d = 0.0;
                let mut sum_dh = 0.0;
                for c in 0..cols {
                    let d = grow[c] * gv[c];
                    sum_d += d;
                    sum_dh += d * hrow[c];
                    gg[c] += grow[c] * hrow[c];
                    gb[c] += grow[c];
                }
                for c in 0..cols {
                    let d = grow[c] * gv[c];
                    gx[r * cols + c] = inv_std[r] / n * (n * d - sum_d - hrow[c] * sum_dh);
                }
            }
            accumulate(nodes, grads, *x, &gx);
            accumulate(nodes, grads, *gain, &gg);
            accumulate(nodes, grads, *bias, &gb);
        }
        Op::GatherRows { table, ids } => {
            let tv = val(*table);
            let d = tv.shape()[1];
            let mut gt = vec![0.0; tv.len()];
            for (r, &id) in ids.iter().enumerate() {
                for c in 0..d {
                    gt[id * d + c] += g[r * d + c];
                }
            }
            accumulate(nodes, grads, *table, &gt);
        }
        Op::SliceCols { x, start } => {
            let s = val(*x).shape();
            let (rows, cols) = (s[0], s[1]);
            let len = node.value.shape()[1];
            let mut gx = vec![0.0; rows * cols];
            for r in 0..rows {
                gx[r * cols + start..r * cols + start + len]
                    .copy_from_slice(&g[r * len..(r + 1) * len]);
            }
            accumulate(nodes, grads, *x, &gx);
        }
        Op::ConcatCols(parts) => {
            let (rows, total) = node.value.as_matrix();
            let mut off = 0;
            for p in parts {
                let c = val(*p).shape()[1];
                let mut gp = vec![0.0; rows * c];
                for r in 0..rows {
                    gp[r * c..(r + 1) * c]
                        .copy_from_slice(&g[r * total + off..r * total + off + c]);
                }
                accumulate(nodes, grads, *p, &gp);
                off += c;
            }
        }
        Op::Pick { x, idx } => {
            let (_, cols) = val(*x).as_matrix();
            let mut gx = vec![0.0; val(*x).len()];
            for (r, &c) in idx.iter().enumerate() {
                gx[r * cols + c] = g[r];
            }
            accumulate(nodes, grads, *x, &gx);
        }
        Op::Sum(x) => {
            let gx = vec![g[0]; val(*x).len()];
            accumulate(nodes, grads, *x, &gx);
        }
        Op::Custom { inputs, rule } => {
            let vals: Vec<&Tensor> = inputs.iter().map(|v| val(*v)).collect();
            let gout = Tensor::new(node.value.shape().to_vec(), g)?;
            let gin = rule(&vals, &node.value, &gout);
            for (v, gt) in inputs.iter().zip(gin) {
                if gt.shape() != val(*v).shape() {
                    return Err(mismatch("custom backward", val(*v).shape(), gt.shape()));
                }
                accumulate(nodes, grads, *v, gt.data());
            }
        }
    }
    Ok(())
}
