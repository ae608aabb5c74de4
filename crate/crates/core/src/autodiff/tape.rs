use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::tensor::{matmul_into, matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::error::{Error, Result};

/// Negative slope of `leaky_relu`.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation tags understood by [`Tape::record`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sum,
    MatMul,
    Tanh,
    LeakyRelu,
    Relu,
    Sigmoid,
    Exp,
    Square,
    Sqrt,
    Sin,
    Cos,
    MinConst,
    MaxConst,
}

impl OpKind {
    pub const ALL: [OpKind; 18] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Neg,
        OpKind::Sum,
        OpKind::MatMul,
        OpKind::Tanh,
        OpKind::LeakyRelu,
        OpKind::Relu,
        OpKind::Sigmoid,
        OpKind::Exp,
        OpKind::Square,
        OpKind::Sqrt,
        OpKind::Sin,
        OpKind::Cos,
        OpKind::MinConst,
        OpKind::MaxConst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Neg => "neg",
            OpKind::Sum => "sum",
            OpKind::MatMul => "matmul",
            OpKind::Tanh => "tanh",
            OpKind::LeakyRelu => "leaky_relu",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Exp => "exp",
            OpKind::Square => "square",
            OpKind::Sqrt => "sqrt",
            OpKind::Sin => "sin",
            OpKind::Cos => "cos",
            OpKind::MinConst => "min_const",
            OpKind::MaxConst => "max_const",
        }
    }

    fn arity(self) -> usize {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::MatMul => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown op kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    LhsScalar,
    RhsScalar,
    /// Right operand is a `1 x cols` row repeated over every row of the left.
    RhsRow,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Div(Var, Var, Broadcast),
    Neg(Var),
    Scale(Var, f64),
    Sum(Var),
    MatMul(Var, Var),
    Tanh(Var),
    LeakyRelu(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Square(Var),
    Sqrt(Var),
    Sin(Var),
    Cos(Var),
    MinConst(Var, Tensor),
    MaxConst(Var, Tensor),
    Reshape(Var),
    Transpose(Var),
    Index(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
}

impl Op {
    fn kind(&self) -> Option<OpKind> {
        Some(match self {
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) | Op::Scale(..) => OpKind::Mul,
            Op::Div(..) => OpKind::Div,
            Op::Neg(_) => OpKind::Neg,
            Op::Sum(_) => OpKind::Sum,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Tanh(_) => OpKind::Tanh,
            Op::LeakyRelu(_) => OpKind::LeakyRelu,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Exp(_) => OpKind::Exp,
            Op::Square(_) => OpKind::Square,
            Op::Sqrt(_) => OpKind::Sqrt,
            Op::Sin(_) => OpKind::Sin,
            Op::Cos(_) => OpKind::Cos,
            Op::MinConst(..) => OpKind::MinConst,
            Op::MaxConst(..) => OpKind::MaxConst,
            _ => return None,
        })
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b, _)
            | Op::Sub(a, b, _)
            | Op::Mul(a, b, _)
            | Op::Div(a, b, _)
            | Op::MatMul(a, b) => vec![*a, *b],
            Op::ConcatCols(vs) | Op::ConcatRows(vs) => vs.clone(),
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Sum(a)
            | Op::Tanh(a)
            | Op::LeakyRelu(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Square(a)
            | Op::Sqrt(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::MinConst(a, _)
            | Op::MaxConst(a, _)
            | Op::Reshape(a)
            | Op::Transpose(a)
            | Op::Index(a, _)
            | Op::GatherRows(a, _)
            | Op::ScatterAddRows(a, _) => vec![*a],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Position on a tape that [`Tape::truncate`] can rewind to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Checkpoint(usize);

/// Append-only record of a computation for reverse-mode differentiation.
///
/// Gradients accumulate across [`Tape::backward`] calls until
/// [`Tape::zero_grad`]. Nodes whose inputs are all constants are marked as
/// not requiring gradients and are skipped during the backward sweep.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    fault: Option<(OpKind, f64)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Test hook: scale every backward contribution of `kind` by `factor`.
    ///
    /// Used to confirm that gradient checking catches a broken backward rule.
    #[doc(hidden)]
    pub fn with_fault(mut self, kind: OpKind, factor: f64) -> Self {
        self.fault = Some((kind, factor));
        self
    }

    #[doc(hidden)]
    pub fn set_fault(&mut self, fault: Option<(OpKind, f64)>) {
        self.fault = fault;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint(self.nodes.len())
    }

    /// Drop every node recorded after `cp`.
    pub fn truncate(&mut self, cp: Checkpoint) {
        self.nodes.truncate(cp.0);
        self.grads.truncate(cp.0);
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of `v`; zeros if nothing reached it.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        let (r, c) = node.value.shape();
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::new(r, c, g.clone()),
            None => Tensor::zeros(r, c),
        }
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::usage(format!(
                "node handle {} out of range (tape has {} nodes)",
                v.0,
                self.nodes.len()
            )))
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(id)
    }

    fn push_op(&mut self, value: Tensor, op: Op) -> Var {
        let rg = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(value, op, rg)
    }

    /// Checked entry point: validates handles, arity and shapes, then records.
    ///
    /// `min_const` / `max_const` take the constant as `param`; every other
    /// kind ignores it.
    pub fn record(&mut self, kind: OpKind, inputs: &[Var], param: f64) -> Result<Var> {
        if inputs.len() != kind.arity() {
            return Err(Error::usage(format!(
                "{kind} expects {} input(s), got {}",
                kind.arity(),
                inputs.len()
            )));
        }
        for &v in inputs {
            self.check(v)?;
        }
        let a = inputs[0];
        match kind {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
                self.broadcast_kind(a, inputs[1])?;
            }
            OpKind::MatMul => {
                let (_, k) = self.value(a).shape();
                let (k2, _) = self.value(inputs[1]).shape();
                if k != k2 {
                    return Err(Error::config(format!("matmul inner dims {k} vs {k2}")));
                }
            }
            _ => {}
        }
        Ok(match kind {
            OpKind::Add => self.add(a, inputs[1]),
            OpKind::Sub => self.sub(a, inputs[1]),
            OpKind::Mul => self.mul(a, inputs[1]),
            OpKind::Div => self.div(a, inputs[1]),
            OpKind::MatMul => self.matmul(a, inputs[1]),
            OpKind::Neg => self.neg(a),
            OpKind::Sum => self.sum(a),
            OpKind::Tanh => self.tanh(a),
            OpKind::LeakyRelu => self.leaky_relu(a),
            OpKind::Relu => self.relu(a),
            OpKind::Sigmoid => self.sigmoid(a),
            OpKind::Exp => self.exp(a),
            OpKind::Square => self.square(a),
            OpKind::Sqrt => self.sqrt(a),
            OpKind::Sin => self.sin(a),
            OpKind::Cos => self.cos(a),
            OpKind::MinConst => self.min_const(a, param),
            OpKind::MaxConst => self.max_const(a, param),
        })
    }

    fn broadcast_kind(&self, a: Var, b: Var) -> Result<Broadcast> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa == sb {
            Ok(Broadcast::Same)
        } else if sb == (1, 1) {
            Ok(Broadcast::RhsScalar)
        } else if sa == (1, 1) {
            Ok(Broadcast::LhsScalar)
        } else if sb.0 == 1 && sb.1 == sa.1 {
            Ok(Broadcast::RhsRow)
        } else {
            Err(Error::config(format!(
                "incompatible shapes {}x{} and {}x{}",
                sa.0, sa.1, sb.0, sb.1
            )))
        }
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> (Tensor, Broadcast) {
        let bc = self
            .broadcast_kind(a, b)
            .unwrap_or_else(|e| panic!("{e}"));
        let va = self.value(a);
        let vb = self.value(b);
        let out = match bc {
            Broadcast::Same => Tensor::new(
                va.rows(),
                va.cols(),
                va.as_slice()
                    .iter()
                    .zip(vb.as_slice())
                    .map(|(&x, &y)| f(x, y))
                    .collect(),
            ),
            Broadcast::RhsScalar => {
                let y = vb.item();
                va.map(|x| f(x, y))
            }
            Broadcast::LhsScalar => {
                let x = va.item();
                vb.map(|y| f(x, y))
            }
            Broadcast::RhsRow => {
                let cols = va.cols();
                let row = vb.as_slice();
                Tensor::new(
                    va.rows(),
                    cols,
                    va.as_slice()
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| f(x, row[i % cols]))
                        .collect(),
                )
            }
        };
        (out, bc)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (v, bc) = self.binary(a, b, |x, y| x + y);
        self.push_op(v, Op::Add(a, b, bc))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (v, bc) = self.binary(a, b, |x, y| x - y);
        self.push_op(v, Op::Sub(a, b, bc))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (v, bc) = self.binary(a, b, |x, y| x * y);
        self.push_op(v, Op::Mul(a, b, bc))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (v, bc) = self.binary(a, b, |x, y| x / y);
        self.push_op(v, Op::Div(a, b, bc))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.push_op(v, Op::Neg(a))
    }

    /// Multiply by a constant scalar.
    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        self.push_op(v, Op::Scale(a, k))
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().sum();
        self.push_op(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let va = self.value(a);
        let vb = self.value(b);
        let (m, k) = va.shape();
        let (k2, n) = vb.shape();
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        matmul_into(va.as_slice(), vb.as_slice(), m, k, n, &mut out);
        self.push_op(Tensor::new(m, n, out), Op::MatMul(a, b))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push_op(v, Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .map(|x| if x >= 0.0 { x } else { LEAKY_SLOPE * x });
        self.push_op(v, Op::LeakyRelu(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push_op(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push_op(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push_op(v, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push_op(v, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sqrt);
        self.push_op(v, Op::Sqrt(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sin);
        self.push_op(v, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::cos);
        self.push_op(v, Op::Cos(a))
    }

    pub fn min_const(&mut self, a: Var, c: f64) -> Var {
        self.min_elementwise(a, Tensor::scalar(c))
    }

    pub fn max_const(&mut self, a: Var, c: f64) -> Var {
        self.max_elementwise(a, Tensor::scalar(c))
    }

    /// Elementwise minimum with a constant (scalar or same-shape) tensor.
    pub fn min_elementwise(&mut self, a: Var, c: Tensor) -> Var {
        let v = const_zip(self.value(a), &c, f64::min);
        self.push_op(v, Op::MinConst(a, c))
    }

    /// Elementwise maximum with a constant (scalar or same-shape) tensor.
    pub fn max_elementwise(&mut self, a: Var, c: Tensor) -> Var {
        let v = const_zip(self.value(a), &c, f64::max);
        self.push_op(v, Op::MaxConst(a, c))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self.value(a).reshaped(rows, cols);
        self.push_op(v, Op::Reshape(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push_op(v, Op::Transpose(a))
    }

    /// Flat element `i` as a `1 x 1` node.
    pub fn index(&mut self, a: Var, i: usize) -> Var {
        let v = Tensor::scalar(self.value(a).as_slice()[i]);
        self.push_op(v, Op::Index(a, i))
    }

    /// Horizontal concatenation of equal-height blocks.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let cols: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rows(), rows, "concat_cols row mismatch");
                out.extend_from_slice(&t.as_slice()[r * t.cols()..(r + 1) * t.cols()]);
            }
        }
        self.push_op(Tensor::new(rows, cols, out), Op::ConcatCols(parts.to_vec()))
    }

    /// Vertical concatenation of equal-width blocks.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            out.extend_from_slice(t.as_slice());
            rows += t.rows();
        }
        self.push_op(Tensor::new(rows, cols, out), Op::ConcatRows(parts.to_vec()))
    }

    /// Row `k` of the result is row `idx[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: Arc<[usize]>) -> Var {
        let t = self.value(a);
        let cols = t.cols();
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &i in idx.iter() {
            out.extend_from_slice(&t.as_slice()[i * cols..(i + 1) * cols]);
        }
        let v = Tensor::new(idx.len(), cols, out);
        self.push_op(v, Op::GatherRows(a, idx))
    }

    /// Row `idx[k]` of the `out_rows`-row result accumulates row `k` of `a`.
    pub fn scatter_add_rows(&mut self, a: Var, idx: Arc<[usize]>, out_rows: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.rows(), idx.len(), "scatter index length mismatch");
        let cols = t.cols();
        let mut out = vec![0.0; out_rows * cols];
        for (k, &i) in idx.iter().enumerate() {
            let src = &t.as_slice()[k * cols..(k + 1) * cols];
            for (o, s) in out[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                *o += s;
            }
        }
        let v = Tensor::new(out_rows, cols, out);
        self.push_op(v, Op::ScatterAddRows(a, idx))
    }

    /// Reverse sweep from `root`, adding `d root / d node` into every
    /// ancestor's accumulator.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        self.check(root)?;
        let n = root.0 + 1;
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; n];
        adj[root.0] = Some(vec![1.0; self.nodes[root.0].value.len()]);
        for i in (0..n).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                let mut g_local = g.clone();
                if let (Some((kind, factor)), Some(k)) = (self.fault, node.op.kind()) {
                    if kind == k {
                        g_local.iter_mut().for_each(|x| *x *= factor);
                    }
                }
                self.propagate(i, &g_local, &mut adj);
            }
            let slot = &mut self.grads[i];
            match slot {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.as_slice();
        let wants = |v: Var| nodes[v.0].requires_grad;
        macro_rules! slot {
            ($v:expr) => {
                grad_slot(adj, nodes, $v)
            };
        }
        let y = node.value.as_slice();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if wants(*a) {
                    accumulate_broadcast(slot!(*a), g, *bc, Side::Lhs, |_| 1.0);
                }
                if wants(*b) {
                    accumulate_broadcast(slot!(*b), g, *bc, Side::Rhs, |_| sign);
                }
            }
            Op::Mul(a, b, bc) => {
                let (va, vb) = (val(*a), val(*b));
                if wants(*a) {
                    accumulate_broadcast(slot!(*a), g, *bc, Side::Lhs, |k| {
                        rhs_at(vb, *bc, k, y.len())
                    });
                }
                if wants(*b) {
                    accumulate_broadcast(slot!(*b), g, *bc, Side::Rhs, |k| {
                        lhs_at(va, *bc, k)
                    });
                }
            }
            Op::Div(a, b, bc) => {
                let (va, vb) = (val(*a), val(*b));
                if wants(*a) {
                    accumulate_broadcast(slot!(*a), g, *bc, Side::Lhs, |k| {
                        1.0 / rhs_at(vb, *bc, k, y.len())
                    });
                }
                if wants(*b) {
                    accumulate_broadcast(slot!(*b), g, *bc, Side::Rhs, |k| {
                        let d = rhs_at(vb, *bc, k, y.len());
                        -lhs_at(va, *bc, k) / (d * d)
                    });
                }
            }
            Op::Neg(a) => unary_acc(slot!(*a), g, |_| -1.0),
            Op::Scale(a, s) => unary_acc(slot!(*a), g, |_| *s),
            Op::Sum(a) => {
                let s = slot!(*a);
                s.iter_mut().for_each(|x| *x += g[0]);
            }
            Op::MatMul(a, b) => {
                let ta = &nodes[a.0].value;
                let tb = &nodes[b.0].value;
                let (m, k) = ta.shape();
                let n = tb.cols();
                if wants(*a) {
                    matmul_nt_acc(g, tb.as_slice(), m, k, n, slot!(*a));
                }
                if wants(*b) {
                    matmul_tn_acc(ta.as_slice(), g, m, k, n, slot!(*b));
                }
            }
            Op::Tanh(a) => unary_acc(slot!(*a), g, |k| 1.0 - y[k] * y[k]),
            Op::LeakyRelu(a) => {
                let x = val(*a);
                unary_acc(slot!(*a), g, |k| if x[k] >= 0.0 { 1.0 } else { LEAKY_SLOPE });
            }
            Op::Relu(a) => {
                let x = val(*a);
                unary_acc(slot!(*a), g, |k| if x[k] >= 0.0 { 1.0 } else { 0.0 });
            }
            Op::Sigmoid(a) => unary_acc(slot!(*a), g, |k| y[k] * (1.0 - y[k])),
            Op::Exp(a) => unary_acc(slot!(*a), g, |k| y[k]),
            Op::Square(a) => {
                let x = val(*a);
                unary_acc(slot!(*a), g, |k| 2.0 * x[k]);
            }
            Op::Sqrt(a) => unary_acc(slot!(*a), g, |k| {
                if y[k] > 0.0 {
                    0.5 / y[k]
                } else {
                    0.0
                }
            }),
            Op::Sin(a) => {
                let x = val(*a);
                unary_acc(slot!(*a), g, |k| x[k].cos());
            }
            Op::Cos(a) => {
                let x = val(*a);
                unary_acc(slot!(*a), g, |k| -x[k].sin());
            }
            // Right-hand subgradients at ties: min passes nothing, max passes all.
            Op::MinConst(a, c) => {
                let x = val(*a);
                unary_acc(slot!(*a), g, |k| if x[k] < const_at(c, k) { 1.0 } else { 0.0 });
            }
            Op::MaxConst(a, c) => {
                let x = val(*a);
                unary_acc(slot!(*a), g, |k| if x[k] >= const_at(c, k) { 1.0 } else { 0.0 });
            }
            Op::Reshape(a) => unary_acc(slot!(*a), g, |_| 1.0),
            Op::Transpose(a) => {
                let (r, c) = nodes[a.0].value.shape();
                let s = slot!(*a);
                // y is c x r, y[j][i] = a[i][j]
                for i in 0..r {
                    for j in 0..c {
                        s[i * c + j] += g[j * r + i];
                    }
                }
            }
            Op::Index(a, idx) => slot!(*a)[*idx] += g[0],
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let cols = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = nodes[p.0].value.cols();
                    if wants(p) {
                        let s = slot!(p);
                        for r in 0..rows {
                            for c in 0..w {
                                s[r * w + c] += g[r * cols + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p.0].value.len();
                    if wants(p) {
                        let s = slot!(p);
                        s.iter_mut()
                            .zip(&g[offset..offset + len])
                            .for_each(|(x, gv)| *x += gv);
                    }
                    offset += len;
                }
            }
            Op::GatherRows(a, idx) => {
                let cols = node.value.cols();
                let s = slot!(*a);
                for (k, &i) in idx.iter().enumerate() {
                    for c in 0..cols {
                        s[i * cols + c] += g[k * cols + c];
                    }
                }
            }
            Op::ScatterAddRows(a, idx) => {
                let cols = node.value.cols();
                let s = slot!(*a);
                for (k, &i) in idx.iter().enumerate() {
                    for c in 0..cols {
                        s[k * cols + c] += g[i * cols + c];
                    }
                }
            }
        }
    }
}

fn grad_slot<'a>(adj: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
    let len = nodes[v.0].value.len();
    adj[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn const_at(c: &Tensor, k: usize) -> f64 {
    if c.is_scalar() {
        c.item()
    } else {
        c.as_slice()[k]
    }
}

fn const_zip(a: &Tensor, c: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert!(
        c.is_scalar() || c.shape() == a.shape(),
        "constant must be scalar or match the operand shape"
    );
    Tensor::new(
        a.rows(),
        a.cols(),
        a.as_slice()
            .iter()
            .enumerate()
            .map(|(k, &x)| f(x, const_at(c, k)))
            .collect(),
    )
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Lhs,
    Rhs,
}

fn lhs_at(va: &[f64], bc: Broadcast, k: usize) -> f64 {
    match bc {
        Broadcast::LhsScalar => va[0],
        _ => va[k],
    }
}

fn rhs_at(vb: &[f64], bc: Broadcast, k: usize, _out_len: usize) -> f64 {
    match bc {
        Broadcast::RhsScalar => vb[0],
        Broadcast::RhsRow => vb[k % vb.len()],
        _ => vb[k],
    }
}

/// Add `g[k] * local(k)` into the operand's adjoint, reducing over broadcast
/// dimensions. `k` indexes the output.
fn accumulate_broadcast(
    dst: &mut [f64],
    g: &[f64],
    bc: Broadcast,
    side: Side,
    local: impl Fn(usize) -> f64,
) {
    let reduced = matches!(
        (bc, side),
        (Broadcast::LhsScalar, Side::Lhs) | (Broadcast::RhsScalar, Side::Rhs)
    );
    if reduced {
        dst[0] += g.iter().enumerate().map(|(k, gv)| gv * local(k)).sum::<f64>();
    } else if bc == Broadcast::RhsRow && side == Side::Rhs {
        let w = dst.len();
        for (k, gv) in g.iter().enumerate() {
            dst[k % w] += gv * local(k);
        }
    } else {
        for (k, gv) in g.iter().enumerate() {
            dst[k] += gv * local(k);
        }
    }
}

fn unary_acc(dst: &mut [f64], g: &[f64], local: impl Fn(usize) -> f64) {
    for (k, (d, gv)) in dst.iter_mut().zip(g).enumerate() {
        *d += gv * local(k);
    }
}
