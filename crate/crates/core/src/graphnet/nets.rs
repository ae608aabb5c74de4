use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::graph::{human_structure, robot_structure, GraphStructure};
use super::layers::{GraphConvLayer, Linear, Params};
use crate::autodiff::{Activation, Tape, Tensor, Var};
use crate::dataio::DemoFrame;
use crate::error::{Error, Result};
use crate::kinematics::RobotModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Graph convolutions over the human and robot skeletons.
    Graph,
    /// Fully connected encoder and decoder on flattened features.
    Dense,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Graph => "graph",
            Architecture::Dense => "dense",
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graph" => Ok(Architecture::Graph),
            "dense" => Ok(Architecture::Dense),
            _ => Err(Error::config(format!("unknown architecture `{s}` (graph|dense)"))),
        }
    }
}

/// Squashing function mapping decoder read-outs into the joint range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Tanh,
    Sigmoid,
}

impl Bound {
    pub fn name(self) -> &'static str {
        match self {
            Bound::Tanh => "tanh",
            Bound::Sigmoid => "sigmoid",
        }
    }

    /// Fraction of the range, in `[0, 1]`, for a read-out `u`.
    pub fn fraction(self, u: f64) -> f64 {
        match self {
            Bound::Tanh => 0.5 * (u.tanh() + 1.0),
            Bound::Sigmoid => 1.0 / (1.0 + (-u).exp()),
        }
    }
}

impl FromStr for Bound {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Bound::Tanh),
            "sigmoid" => Ok(Bound::Sigmoid),
            _ => Err(Error::config(format!("unknown bound `{s}` (tanh|sigmoid)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub arch: Architecture,
    pub activation: Activation,
    pub bound: Bound,
    /// Latent width per robot node (graph) or in total (dense).
    pub latent: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            arch: Architecture::Graph,
            activation: Activation::LeakyRelu,
            bound: Bound::Tanh,
            latent: 64,
        }
    }
}

impl NetConfig {
    pub fn dense() -> Self {
        NetConfig {
            arch: Architecture::Dense,
            latent: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 {
            return Err(Error::config("latent width must be positive"));
        }
        Ok(())
    }
}

const ENCODER_WIDTHS: [usize; 3] = [16, 32, 64];
const DECODER_WIDTHS: [usize; 3] = [32, 16, 1];
const DENSE_ENCODER: [usize; 2] = [64, 128];
const DENSE_DECODER: [usize; 2] = [128, 64];

#[derive(Clone, Debug, PartialEq)]
enum Encoder {
    Graph { convs: Vec<GraphConvLayer>, bridge: Linear },
    Dense { layers: Vec<Linear> },
}

#[derive(Clone, Debug, PartialEq)]
enum Decoder {
    Graph { convs: Vec<GraphConvLayer> },
    Dense { layers: Vec<Linear> },
}

/// Encoder and decoder for one robot and the canonical human skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub config: NetConfig,
    pub encoder_params: Params,
    pub decoder_params: Params,
    encoder: Encoder,
    decoder: Decoder,
    human: GraphStructure,
    robot: GraphStructure,
    robot_edges: Tensor,
    lower: Vec<f64>,
    upper: Vec<f64>,
    robot_name: String,
    joint_names: Vec<String>,
}

/// Initial scale of the last decoder layer.
pub const READOUT_GAIN: f64 = 0.01;

impl Networks {
    /// Fresh networks with fan-in uniform weights drawn from `seed`.
    pub fn new(model: &RobotModel, config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let human = human_structure();
        let (robot, robot_edges) = robot_structure(model)?;
        let n_h = human.n_nodes();
        let n_r = robot.n_nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc = Params::new();
        let mut dec = Params::new();
        let act = config.activation;
        let mut readout = 0;
        let (encoder, decoder) = match config.arch {
            Architecture::Graph => {
                let mut convs = Vec::new();
                let mut c = 3;
                for (i, &w) in ENCODER_WIDTHS.iter().enumerate() {
                    convs.push(GraphConvLayer::new(&mut enc, &format!("enc.conv{i}"), c, w, 3, act, &mut rng));
                    c = w;
                }
                let bridge = Linear::new(&mut enc, "enc.bridge", n_h * c, n_r * config.latent, &mut rng);
                let mut dconvs = Vec::new();
                let mut c = config.latent + 2;
                for (i, &w) in DECODER_WIDTHS.iter().enumerate() {
                    readout = dec.len();
                    dconvs.push(GraphConvLayer::new(&mut dec, &format!("dec.conv{i}"), c, w, 6, act, &mut rng));
                    c = w;
                }
                (Encoder::Graph { convs, bridge }, Decoder::Graph { convs: dconvs })
            }
            Architecture::Dense => {
                let stack = |p: &mut Params, name: &str, widths: &[usize], rng: &mut ChaCha8Rng| {
                    widths
                        .windows(2)
                        .enumerate()
                        .map(|(i, w)| Linear::new(p, &format!("{name}.fc{i}"), w[0], w[1], rng))
                        .collect::<Vec<_>>()
                };
                let mut ew = vec![3 * n_h];
                ew.extend(DENSE_ENCODER);
                ew.push(config.latent);
                let mut dw = vec![config.latent + 2 * n_r];
                dw.extend(DENSE_DECODER);
                dw.push(n_r);
                let layers = stack(&mut enc, "enc", &ew, &mut rng);
                let dlayers = stack(&mut dec, "dec", &dw, &mut rng);
                readout = dec.len() - 2;
                (Encoder::Dense { layers }, Decoder::Dense { layers: dlayers })
            }
        };
        // A small readout starts every joint near its midpoint, away from the
        // flat tails of the bound.
        for t in &mut dec.tensors_mut()[readout..] {
            *t = t.map(|x| x * READOUT_GAIN);
        }
        Ok(Networks {
            config,
            encoder_params: enc,
            decoder_params: dec,
            encoder,
            decoder,
            human,
            robot,
            robot_edges,
            lower: model.lower_limits(),
            upper: model.upper_limits(),
            robot_name: model.name.clone(),
            joint_names: model.joints.iter().map(|j| j.name.clone()).collect(),
        })
    }

    pub fn dof(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Shape of one frame's latent code.
    pub fn latent_shape(&self) -> (usize, usize) {
        match self.config.arch {
            Architecture::Graph => (self.robot.n_nodes(), self.config.latent),
            Architecture::Dense => (1, self.config.latent),
        }
    }

    pub fn latent_len(&self) -> usize {
        let (r, c) = self.latent_shape();
        r * c
    }

    pub fn robot_graph(&self) -> (&GraphStructure, &Tensor) {
        (&self.robot, &self.robot_edges)
    }

    /// Hex SHA-256 over everything that fixes the parameter layout and the
    /// meaning of each output.
    pub fn topology_hash(&self) -> String {
        let mut h = Sha256::new();
        let c = &self.config;
        h.update(format!("{}|{}|{}|{}\n", c.arch.name(), c.activation.name(), c.bound.name(), c.latent));
        h.update(format!("robot {}\n", self.robot_name));
        for (i, n) in self.joint_names.iter().enumerate() {
            h.update(format!(
                "{n} {:?} {:?} {:?}\n",
                self.robot.node_types[i],
                self.lower[i].to_bits(),
                self.upper[i].to_bits()
            ));
        }
        for g in [&self.human, &self.robot] {
            h.update(format!("{:?} {:?} {:?}\n", g.node_types, g.src, g.dst));
        }
        for p in [&self.encoder_params, &self.decoder_params] {
            for (n, t) in p.names().iter().zip(p.tensors()) {
                h.update(format!("{n} {}x{}\n", t.rows(), t.cols()));
            }
        }
        hex::encode(h.finalize())
    }

    fn check_frames(&self, frames: &[&DemoFrame]) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::usage("cannot encode an empty batch"));
        }
        for f in frames {
            if f.positions.len() != self.human.n_nodes() {
                return Err(Error::usage(format!(
                    "demo frame has {} keypoints, encoder expects {}",
                    f.positions.len(),
                    self.human.n_nodes()
                )));
            }
        }
        Ok(())
    }

    /// Latent codes for a batch, stacked as `(B * rows) x cols`.
    pub fn encode_on_tape(&self, tape: &mut Tape, pv: &[Var], frames: &[&DemoFrame]) -> Result<Var> {
        self.check_frames(frames)?;
        let b = frames.len();
        let n_h = self.human.n_nodes();
        match &self.encoder {
            Encoder::Graph { convs, bridge } => {
                let s = self.human.replicate(b);
                let idx = s.index_sets();
                let nodes = Tensor::from_fn(b * n_h, 3, |r, c| frames[r / n_h].positions[r % n_h][c]);
                let e_per = self.human.n_edges();
                let edges = Tensor::from_fn(b * e_per, 3, |r, c| {
                    let (f, e) = (r / e_per, r % e_per);
                    let p = &frames[f].positions;
                    p[self.human.dst[e]][c] - p[self.human.src[e]][c]
                });
                let mut x = tape.constant(nodes);
                let ev = tape.constant(edges);
                for conv in convs {
                    x = conv.forward(tape, pv, x, ev, &idx)?;
                }
                let c = convs.last().map_or(3, |l| l.out_ch);
                let flat = tape.reshape(x, b, n_h * c);
                let z = bridge.forward(tape, pv, flat)?;
                let (rows, cols) = self.latent_shape();
                Ok(tape.reshape(z, b * rows, cols))
            }
            Encoder::Dense { layers } => {
                let input = Tensor::from_fn(b, 3 * n_h, |r, c| frames[r].positions[c / 3][c % 3]);
                let mut x = tape.constant(input);
                for (i, l) in layers.iter().enumerate() {
                    x = l.forward(tape, pv, x)?;
                    if i + 1 < layers.len() {
                        x = self.config.activation.apply(tape, x);
                    }
                }
                Ok(x)
            }
        }
    }

    /// Joint angles for stacked latent codes, as a `(B * dof) x 1` column
    /// whose `b`-th block of `dof` rows belongs to frame `b`.
    pub fn decode_on_tape(&self, tape: &mut Tape, pv: &[Var], z: Var, batch: usize) -> Result<Var> {
        let (rows, cols) = self.latent_shape();
        let shape = tape.value(z).shape();
        if batch == 0 || shape != (batch * rows, cols) {
            return Err(Error::usage(format!(
                "latent has shape {} x {}, expected {} x {}",
                shape.0,
                shape.1,
                batch * rows,
                cols
            )));
        }
        let n = self.dof();
        let u = match &self.decoder {
            Decoder::Graph { convs } => {
                let s = self.robot.replicate(batch);
                let idx = s.index_sets();
                let lo = tape.constant(Tensor::from_fn(batch * n, 1, |r, _| self.lower[r % n]));
                let hi = tape.constant(Tensor::from_fn(batch * n, 1, |r, _| self.upper[r % n]));
                let e_per = self.robot.n_edges();
                let edges = tape.constant(Tensor::from_fn(batch * e_per, 6, |r, c| self.robot_edges.get(r % e_per, c)));
                let mut x = tape.concat_cols(&[z, lo, hi]);
                for conv in convs {
                    x = conv.forward(tape, pv, x, edges, &idx)?;
                }
                x
            }
            Decoder::Dense { layers } => {
                let lo = tape.constant(Tensor::from_fn(batch, n, |_, c| self.lower[c]));
                let hi = tape.constant(Tensor::from_fn(batch, n, |_, c| self.upper[c]));
                let mut x = tape.concat_cols(&[z, lo, hi]);
                for (i, l) in layers.iter().enumerate() {
                    x = l.forward(tape, pv, x)?;
                    if i + 1 < layers.len() {
                        x = self.config.activation.apply(tape, x);
                    }
                }
                tape.reshape(x, batch * n, 1)
            }
        };
        Ok(self.bound_on_tape(tape, u, batch))
    }

    /// `lower + f(u) * (upper - lower)` with `f` the configured bound,
    /// clamped so rounding cannot leave the range.
    pub fn bound_on_tape(&self, tape: &mut Tape, u: Var, batch: usize) -> Var {
        let n = self.dof();
        let col = |f: &dyn Fn(usize) -> f64| Tensor::from_fn(batch * n, 1, |r, _| f(r % n));
        let range = tape.constant(col(&|i| self.upper[i] - self.lower[i]));
        let lo = tape.constant(col(&|i| self.lower[i]));
        let frac = match self.config.bound {
            Bound::Tanh => {
                let t = tape.tanh(u);
                let t = tape.scale(t, 0.5);
                let half = tape.scalar(0.5);
                tape.add(t, half)
            }
            Bound::Sigmoid => tape.sigmoid(u),
        };
        let a = tape.mul(frac, range);
        let a = tape.add(a, lo);
        let a = tape.min_elementwise(a, col(&|i| self.upper[i]));
        tape.max_elementwise(a, col(&|i| self.lower[i]))
    }

    /// Rows of frame `b` in a stacked angle column.
    pub fn frame_angles(&self, tape: &mut Tape, angles: Var, b: usize) -> Var {
        let n = self.dof();
        let idx: Arc<[usize]> = (b * n..(b + 1) * n).collect();
        tape.gather_rows(angles, idx)
    }

    /// Rows of frame `b` in a stacked latent.
    pub fn frame_latent(&self, tape: &mut Tape, z: Var, b: usize) -> Var {
        let (rows, _) = self.latent_shape();
        let idx: Arc<[usize]> = (b * rows..(b + 1) * rows).collect();
        tape.gather_rows(z, idx)
    }

    pub fn encode(&self, frame: &DemoFrame) -> Result<Tensor> {
        let mut tape = Tape::new();
        let pv = self.encoder_params.register(&mut tape, false);
        let z = self.encode_on_tape(&mut tape, &pv, &[frame])?;
        Ok(tape.value(z).clone())
    }

    pub fn decode(&self, z: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let pv = self.decoder_params.register(&mut tape, false);
        let zv = tape.constant(z.clone());
        let a = self.decode_on_tape(&mut tape, &pv, zv, 1)?;
        Ok(tape.value(a).as_slice().to_vec())
    }

    /// Replace parameters, keeping the layout.
    pub fn set_params(&mut self, encoder: Vec<Tensor>, decoder: Vec<Tensor>) -> Result<()> {
        for (dst, src) in [(&mut self.encoder_params, encoder), (&mut self.decoder_params, decoder)] {
            if dst.len() != src.len()
                || dst.tensors().iter().zip(&src).any(|(a, b)| a.shape() != b.shape())
            {
                return Err(Error::usage("parameter layout mismatch"));
            }
            dst.tensors_mut().clone_from_slice(&src);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_demo, HumanSkeleton};
    use crate::kinematics::bundled_model;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn frame() -> DemoFrame {
        synth_demo(3, 1, 1.0 / 30.0, &HumanSkeleton::default(), 1.0)
            .unwrap()
            .frames
            .remove(0)
    }

    #[test]
    fn same_seed_same_weights() {
        let m = bundled_model("arm7x2_hand").unwrap();
        let a = Networks::new(&m, NetConfig::default(), 5).unwrap();
        let b = Networks::new(&m, NetConfig::default(), 5).unwrap();
        let c = Networks::new(&m, NetConfig::default(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.decoder_params, c.decoder_params);
        assert_eq!(a.topology_hash(), c.topology_hash());
        let f = frame();
        assert_eq!(a.encode(&f).unwrap(), b.encode(&f).unwrap());
        assert_eq!(a.latent_shape(), (26, 64));
    }

    #[test]
    fn zero_weights_encode_to_zero() {
        let m = bundled_model("arm5x2").unwrap();
        let mut n = Networks::new(&m, NetConfig::default(), 1).unwrap();
        let zeros = |p: &Params| p.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        let (e, d) = (zeros(&n.encoder_params), zeros(&n.decoder_params));
        n.set_params(e, d).unwrap();
        let z = n.encode(&frame()).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        // Zero read-out lands on the midpoint.
        let a = n.decode(&z).unwrap();
        for ((x, lo), hi) in a.iter().zip(n.lower()).zip(n.upper()) {
            assert!((x - 0.5 * (lo + hi)).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_saturates_at_limits() {
        let m = bundled_model("arm5x2").unwrap();
        for bound in [Bound::Tanh, Bound::Sigmoid] {
            let cfg = NetConfig { bound, ..NetConfig::default() };
            let n = Networks::new(&m, cfg, 1).unwrap();
            for (u, want) in [(1e3, n.upper().to_vec()), (-1e3, n.lower().to_vec())] {
                let mut tape = Tape::new();
                let uv = tape.constant(Tensor::from_fn(n.dof(), 1, |_, _| u));
                let a = n.bound_on_tape(&mut tape, uv, 1);
                assert_eq!(tape.value(a).as_slice(), &want[..]);
            }
        }
    }

    #[test]
    fn random_latents_decode_within_limits() {
        let m = bundled_model("arm7x2_hand").unwrap();
        for cfg in [NetConfig::default(), NetConfig::dense()] {
            let n = Networks::new(&m, cfg, 9).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (r, c) = n.latent_shape();
            for _ in 0..20 {
                let z = Tensor::from_fn(r, c, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
                let a = n.decode(&z).unwrap();
                assert!(a.iter().all(|v| v.is_finite()));
                assert!(m.within_limits(&a));
            }
        }
    }

    #[test]
    fn shape_errors_are_usage_errors() {
        let m = bundled_model("arm5x2").unwrap();
        let n = Networks::new(&m, NetConfig::default(), 1).unwrap();
        assert!(matches!(n.decode(&Tensor::zeros(3, 3)), Err(Error::Usage(_))));
        let mut f = frame();
        f.positions.pop();
        assert!(matches!(n.encode(&f), Err(Error::Usage(_))));
    }

    #[test]
    fn batched_decode_matches_single() {
        let m = bundled_model("arm5x2").unwrap();
        let n = Networks::new(&m, NetConfig::default(), 2).unwrap();
        let (r, c) = n.latent_shape();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z1 = Tensor::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        let z2 = Tensor::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        let mut both = z1.as_slice().to_vec();
        both.extend_from_slice(z2.as_slice());
        let mut tape = Tape::new();
        let pv = n.decoder_params.register(&mut tape, false);
        let zv = tape.constant(Tensor::new(2 * r, c, both));
        let a = n.decode_on_tape(&mut tape, &pv, zv, 2).unwrap();
        let a2 = n.frame_angles(&mut tape, a, 1);
        let single = n.decode(&z2).unwrap();
        for (x, y) in tape.value(a2).as_slice().iter().zip(&single) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
