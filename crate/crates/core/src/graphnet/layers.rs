use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::IndexSets;
use crate::autodiff::{Activation, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Put every tensor on the tape, as leaves when `trainable`.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for a `fan_in x cols` tensor.
pub fn fan_in_uniform(rng: &mut ChaCha8Rng, fan_in: usize, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
}

/// Affine map `x W + b`, `W` stored `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    w: usize,
    b: usize,
}

impl Linear {
    pub fn new(params: &mut Params, name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = params.push(format!("{name}.w"), fan_in_uniform(rng, input, input, output));
        let b = params.push(format!("{name}.b"), fan_in_uniform(rng, input, 1, output));
        Linear { input, output, w, b }
    }

    pub fn forward(&self, tape: &mut Tape, pv: &[Var], x: Var) -> Result<Var> {
        if tape.value(x).cols() != self.input {
            return Err(Error::config(format!(
                "linear layer expects {} inputs, got {}",
                self.input,
                tape.value(x).cols()
            )));
        }
        let y = tape.matmul(x, pv[self.w]);
        Ok(tape.add(y, pv[self.b]))
    }
}

/// Residual graph convolution with one weight set per node type:
/// `x'_i = P_t x_i + sum_{j -> i} g([x_i, x_j, e_ji] W_t + b_t)`, where `t` is
/// the type of node `i` and `P_t` is the identity when widths agree.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub edge_ch: usize,
    pub activation: Activation,
    w: [usize; 2],
    b: [usize; 2],
    proj: Option<[usize; 2]>,
}

impl GraphConvLayer {
    pub fn new(
        params: &mut Params,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        edge_ch: usize,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let k = 2 * in_ch + edge_ch;
        let mut w = [0; 2];
        let mut b = [0; 2];
        for t in 0..2 {
            w[t] = params.push(format!("{name}.t{t}.w"), fan_in_uniform(rng, k, k, out_ch));
            b[t] = params.push(format!("{name}.t{t}.b"), fan_in_uniform(rng, k, 1, out_ch));
        }
        let proj = (in_ch != out_ch).then(|| {
            let mut p = [0; 2];
            for (t, slot) in p.iter_mut().enumerate() {
                *slot = params.push(format!("{name}.t{t}.proj"), fan_in_uniform(rng, in_ch, in_ch, out_ch));
            }
            p
        });
        GraphConvLayer {
            in_ch,
            out_ch,
            edge_ch,
            activation,
            w,
            b,
            proj,
        }
    }

    /// Parameter indices of the per-type weight matrices.
    pub fn weight_ids(&self) -> [usize; 2] {
        self.w
    }

    pub fn bias_ids(&self) -> [usize; 2] {
        self.b
    }

    pub fn projection_ids(&self) -> Option<[usize; 2]> {
        self.proj
    }

    /// `x` is `N x in_ch`, `edges` is `E x edge_ch`.
    pub fn forward(&self, tape: &mut Tape, pv: &[Var], x: Var, edges: Var, idx: &IndexSets) -> Result<Var> {
        let xs = tape.value(x).shape();
        let es = tape.value(edges).shape();
        if xs != (idx.n_nodes, self.in_ch) {
            return Err(Error::config(format!(
                "graph conv expects {} x {} node features, got {} x {}",
                idx.n_nodes, self.in_ch, xs.0, xs.1
            )));
        }
        if es != (idx.n_edges, self.edge_ch) {
            return Err(Error::config(format!(
                "graph conv expects {} x {} edge features, got {} x {}",
                idx.n_edges, self.edge_ch, es.0, es.1
            )));
        }
        let mut out: Option<Var> = None;
        let mut acc = |tape: &mut Tape, v: Var| {
            out = Some(match out {
                None => v,
                Some(o) => tape.add(o, v),
            });
        };
        for (t, ti) in idx.per_type.iter().enumerate() {
            if let Some(p) = self.proj {
                if !ti.nodes.is_empty() {
                    let xt = tape.gather_rows(x, ti.nodes.clone());
                    let y = tape.matmul(xt, pv[p[t]]);
                    let back = tape.scatter_add_rows(y, ti.nodes.clone(), idx.n_nodes);
                    acc(tape, back);
                }
            }
            if ti.edges.is_empty() {
                continue;
            }
            let xi = tape.gather_rows(x, ti.dst.clone());
            let xj = tape.gather_rows(x, ti.src.clone());
            let e = tape.gather_rows(edges, ti.edges.clone());
            let z = tape.concat_cols(&[xi, xj, e]);
            let h = tape.matmul(z, pv[self.w[t]]);
            let h = tape.add(h, pv[self.b[t]]);
            let h = self.activation.apply(tape, h);
            let m = tape.scatter_add_rows(h, ti.dst.clone(), idx.n_nodes);
            acc(tape, m);
        }
        let summed = out;
        Ok(match (self.proj, summed) {
            (None, Some(s)) => tape.add(x, s),
            (None, None) => x,
            (Some(_), Some(s)) => s,
            (Some(_), None) => {
                let z = tape.constant(Tensor::zeros(idx.n_nodes, self.out_ch));
                z
            }
        })
    }
}
