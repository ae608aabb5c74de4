//! Finite-difference checks of every differentiable component over seeded
//! random configurations.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{check_gradient_with, Activation, GradCheckOptions, GradCheckReport, OpKind, Tape, Tensor, Var};
use crate::dataio::{synth_demo, DemoFrame, HumanSkeleton};
use crate::error::{Error, Result};
use crate::graphnet::{robot_structure, GraphConvLayer, NetConfig, Networks, Params};
use crate::kinematics::{bundled_model, tape_forward_kinematics, RobotModel};
use crate::objective::{
    colliding_pairs, joint_limit_loss, latent_prior, objective_on_tape, Correspondence, ObjectiveWeights,
};

/// Checked components, in report order.
pub const COMPONENTS: [&str; 11] = [
    "fk",
    "loss_ee",
    "loss_ori",
    "loss_elb",
    "loss_fin",
    "loss_col",
    "loss_lim",
    "prior",
    "graph_conv",
    "decode",
    "objective_z",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteOptions {
    /// Random configurations per component.
    pub configs: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub step: f64,
    /// Coordinates probed per configuration for the wide inputs (latents,
    /// graph features); narrow inputs are checked in full.
    pub coords: usize,
    #[serde(skip)]
    pub fault: Option<(OpKind, f64)>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            configs: 100,
            seed: 0,
            tolerance: 1e-4,
            step: 1e-5,
            coords: 6,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub component: String,
    pub configs: usize,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    /// Configuration seed of the worst coordinate.
    pub worst_config: Option<u64>,
    pub passed: bool,
}

struct Fixture {
    arm: RobotModel,
    hand: RobotModel,
    arm_corr: Correspondence,
    hand_corr: Correspondence,
    skeleton: HumanSkeleton,
}

/// Run the checks for `components` (all when empty).
pub fn run_suite(opts: &SuiteOptions, components: &[String]) -> Result<Vec<ComponentReport>> {
    if opts.configs == 0 || opts.coords == 0 {
        return Err(Error::config("gradcheck needs at least one configuration and coordinate"));
    }
    for c in components {
        if !COMPONENTS.contains(&c.as_str()) {
            return Err(Error::config(format!("unknown gradcheck component `{c}`")));
        }
    }
    let arm = bundled_model("arm5x2")?;
    let hand = bundled_model("arm7x2_hand")?;
    let fx = Fixture {
        arm_corr: Correspondence::new(&arm)?,
        hand_corr: Correspondence::new(&hand)?,
        arm,
        hand,
        skeleton: HumanSkeleton::default(),
    };
    COMPONENTS
        .iter()
        .filter(|c| components.is_empty() || components.iter().any(|x| x == *c))
        .map(|c| run_component(&fx, c, opts))
        .collect()
}

fn run_component(fx: &Fixture, name: &str, opts: &SuiteOptions) -> Result<ComponentReport> {
    let mut rep = ComponentReport {
        component: name.to_string(),
        configs: 0,
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        worst_config: None,
        passed: true,
    };
    // Networks are costly to build; configurations share one per eight seeds.
    let mut nets: Option<(u64, Networks)> = None;
    for k in 0..opts.configs as u64 {
        let cseed = opts.seed.wrapping_mul(0x9e37_79b9).wrapping_add(k * 7919 + name.len() as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(cseed);
        let r = match name {
            "decode" | "objective_z" => {
                let group = k / 8;
                if nets.as_ref().map(|(g, _)| *g) != Some(group) {
                    nets = Some((group, random_nets(fx, group, opts.seed)?));
                }
                let n = &nets.as_ref().expect("just built").1;
                check_network(fx, name, n, &mut rng, opts)?
            }
            _ => check_simple(fx, name, &mut rng, opts)?,
        };
        rep.configs += 1;
        rep.checked += r.checked;
        rep.skipped += r.skipped;
        if r.checked > 0 && (rep.worst_config.is_none() || r.max_rel_error > rep.max_rel_error) {
            rep.max_rel_error = r.max_rel_error;
            rep.worst_config = Some(cseed);
        }
    }
    rep.passed = rep.checked > 0 && rep.max_rel_error < opts.tolerance;
    Ok(rep)
}

fn options(opts: &SuiteOptions, coords: Option<Vec<usize>>) -> GradCheckOptions {
    GradCheckOptions {
        step: opts.step,
        coords,
        fault: opts.fault,
        ..GradCheckOptions::default()
    }
}

fn sample_coords(rng: &mut ChaCha8Rng, len: usize, count: usize) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    rand::seq::index::sample(rng, len, count).into_vec()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Angles strictly inside the limits.
fn interior_angles(rng: &mut ChaCha8Rng, model: &RobotModel) -> Vec<f64> {
    model
        .joints
        .iter()
        .map(|j| {
            let pad = 0.05 * (j.upper - j.lower);
            rng.gen_range(j.lower + pad..j.upper - pad)
        })
        .collect()
}

fn demo_frame(fx: &Fixture, rng: &mut ChaCha8Rng) -> Result<DemoFrame> {
    let seq = synth_demo(rng.gen(), 1, 1.0 / 30.0, &fx.skeleton, 1.0)?;
    Ok(seq.frames.into_iter().next().expect("one frame"))
}

/// `sum(v .* c)` for a fixed random weighting `c`, reducing any node to a
/// scalar with a generic gradient.
fn weighted_sum(tape: &mut Tape, v: Var, c: &Tensor) -> Var {
    let w = tape.constant(c.clone());
    let p = tape.mul(v, w);
    tape.sum(p)
}

fn single_term(term: &str) -> ObjectiveWeights {
    let mut w = ObjectiveWeights::prior_only();
    match term {
        "loss_ee" => w.ee = 1.0,
        "loss_ori" => w.ori = 1.0,
        "loss_elb" => w.elb = 1.0,
        "loss_fin" => w.fin = 1.0,
        _ => w.col = 1.0,
    }
    w
}

fn check_simple(fx: &Fixture, name: &str, rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> Result<GradCheckReport> {
    let model = if rng.gen_bool(0.5) || name == "loss_fin" { &fx.hand } else { &fx.arm };
    let corr = if std::ptr::eq(model, &fx.hand) { &fx.hand_corr } else { &fx.arm_corr };
    match name {
        "fk" => {
            let angles = interior_angles(rng, model);
            let nm = model.markers.len();
            let cp: Vec<Tensor> = (0..nm).map(|_| Tensor::column(&uniform(rng, 3, -1.0, 1.0))).collect();
            let cr: Vec<Tensor> = model
                .chains
                .iter()
                .map(|_| Tensor::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            check_gradient_with(
                |tape, x| {
                    let fr = tape_forward_kinematics(model, tape, x)?;
                    let mut acc = Vec::new();
                    for (m, c) in cp.iter().enumerate() {
                        let p = fr.marker(tape, model, m);
                        acc.push(weighted_sum(tape, p, c));
                    }
                    for (ch, c) in model.chains.iter().zip(&cr) {
                        let r = fr.marker_rotation(tape, model, ch.wrist);
                        acc.push(weighted_sum(tape, r, c));
                    }
                    Ok(acc.into_iter().reduce(|a, b| tape.add(a, b)).expect("markers exist"))
                },
                &angles,
                &options(opts, None),
            )
        }
        "loss_ee" | "loss_ori" | "loss_elb" | "loss_fin" => {
            let demo = demo_frame(fx, rng)?;
            let angles = interior_angles(rng, model);
            let w = single_term(name);
            check_gradient_with(
                |tape, x| Ok(objective_on_tape(tape, model, corr, &demo, x, None, &w)?.total),
                &angles,
                &options(opts, None),
            )
        }
        "loss_col" => {
            // Rejection-sample a pose with at least one pair inside d_min.
            let demo = demo_frame(fx, rng)?;
            let mut angles = interior_angles(rng, model);
            for _ in 0..2000 {
                if !colliding_pairs(model, &angles)?.is_empty() {
                    break;
                }
                angles = interior_angles(rng, model);
            }
            let w = single_term(name);
            check_gradient_with(
                |tape, x| Ok(objective_on_tape(tape, model, corr, &demo, x, None, &w)?.total),
                &angles,
                &options(opts, None),
            )
        }
        "loss_lim" => {
            let lower = model.lower_limits();
            let upper = model.upper_limits();
            let angles: Vec<f64> = lower
                .iter()
                .zip(&upper)
                .map(|(l, u)| {
                    let span = u - l;
                    rng.gen_range(l - 0.5 * span..u + 0.5 * span)
                })
                .collect();
            check_gradient_with(
                |tape, x| Ok(joint_limit_loss(tape, x, &lower, &upper)),
                &angles,
                &options(opts, None),
            )
        }
        "prior" => {
            let z = uniform(rng, 64, -2.0, 2.0);
            let sigma = rng.gen_range(0.5..2.0);
            check_gradient_with(|tape, x| Ok(latent_prior(tape, x, sigma)), &z, &options(opts, None))
        }
        "graph_conv" => check_graph_conv(model, rng, opts),
        _ => Err(Error::config(format!("unknown gradcheck component `{name}`"))),
    }
}

/// One typed convolution on the robot graph; the probe vector holds the
/// node features followed by the first type's weight matrix.
fn check_graph_conv(model: &RobotModel, rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> Result<GradCheckReport> {
    let (s, edges) = robot_structure(model)?;
    let idx = s.index_sets();
    let n = s.n_nodes();
    let in_ch = rng.gen_range(2..6);
    let out_ch = if rng.gen_bool(0.5) { in_ch } else { rng.gen_range(2..6) };
    let act = Activation::ALL[rng.gen_range(0..Activation::ALL.len())];
    let mut params = Params::new();
    let layer = GraphConvLayer::new(&mut params, "probe", in_ch, out_ch, edges.cols(), act, rng);
    let w0 = layer.weight_ids()[0];
    let wshape = params.tensors()[w0].shape();
    let mut point = uniform(rng, n * in_ch, -1.0, 1.0);
    point.extend_from_slice(params.tensors()[w0].as_slice());
    let c = Tensor::from_fn(n, out_ch, |_, _| rng.gen_range(-1.0..1.0));
    let nx = n * in_ch;
    let coords = {
        let mut v = sample_coords(rng, nx, opts.coords);
        v.extend(sample_coords(rng, wshape.0 * wshape.1, opts.coords).into_iter().map(|i| nx + i));
        v
    };
    check_gradient_with(
        |tape, p| {
            let xi: Arc<[usize]> = (0..nx).collect();
            let wi: Arc<[usize]> = (nx..nx + wshape.0 * wshape.1).collect();
            let x = tape.gather_rows(p, xi);
            let x = tape.reshape(x, n, in_ch);
            let w = tape.gather_rows(p, wi);
            let w = tape.reshape(w, wshape.0, wshape.1);
            let mut pv = params.register(tape, false);
            pv[w0] = w;
            let e = tape.constant(edges.clone());
            let y = layer.forward(tape, &pv, x, e, &idx)?;
            Ok(weighted_sum(tape, y, &c))
        },
        &point,
        &options(opts, Some(coords)),
    )
}

/// Networks with weights spread past their initial scale so checks run
/// away from the near-linear regime of a fresh readout.
fn random_nets(fx: &Fixture, group: u64, seed: u64) -> Result<Networks> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xdec0_de00 + group));
    let act = Activation::ALL[(group % 4) as usize];
    let config = NetConfig {
        activation: act,
        ..NetConfig::default()
    };
    let mut nets = Networks::new(&fx.hand, config, rng.gen())?;
    let enc = nets.encoder_params.tensors().to_vec();
    let dec: Vec<Tensor> = nets
        .decoder_params
        .tensors()
        .iter()
        .map(|t| {
            let d: Vec<f64> = t.as_slice().iter().map(|x| x * 3.0 + 0.01 * rng.gen_range(-1.0..1.0)).collect();
            Tensor::new(t.rows(), t.cols(), d)
        })
        .collect();
    nets.set_params(enc, dec)?;
    Ok(nets)
}

fn check_network(
    fx: &Fixture,
    name: &str,
    nets: &Networks,
    rng: &mut ChaCha8Rng,
    opts: &SuiteOptions,
) -> Result<GradCheckReport> {
    let (rows, cols) = nets.latent_shape();
    let z = uniform(rng, rows * cols, -1.0, 1.0);
    let coords = sample_coords(rng, z.len(), opts.coords);
    if name == "decode" {
        let c = Tensor::column(&uniform(rng, nets.dof(), -1.0, 1.0));
        return check_gradient_with(
            |tape, x| {
                let pv = nets.decoder_params.register(tape, false);
                let zm = tape.reshape(x, rows, cols);
                let a = nets.decode_on_tape(tape, &pv, zm, 1)?;
                Ok(weighted_sum(tape, a, &c))
            },
            &z,
            &options(opts, Some(coords)),
        );
    }
    let demo = demo_frame(fx, rng)?;
    let w = ObjectiveWeights::default();
    check_gradient_with(
        |tape, x| {
            let pv = nets.decoder_params.register(tape, false);
            let zm = tape.reshape(x, rows, cols);
            let a = nets.decode_on_tape(tape, &pv, zm, 1)?;
            Ok(objective_on_tape(tape, &fx.hand, &fx.hand_corr, &demo, a, Some(zm), &w)?.total)
        },
        &z,
        &options(opts, Some(coords)),
    )
}
