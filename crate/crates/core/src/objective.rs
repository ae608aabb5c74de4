//! Retargeting objective: normalised end-effector, orientation, elbow and
//! finger terms, capsule collision, the latent prior and the soft joint-limit
//! penalty used by the direct-angle baseline.
//!
//! Every term is recorded on a [`Tape`]; plain values come from
//! [`evaluate_angles`], which runs the same code on constant inputs.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
pub use crate::dataio::DemoFrame;
use crate::dataio::HumanSkeleton;
use crate::error::{Error, Result};
use crate::kinematics::{
    capsule_distance, mat3_tensor, tape_capsule_distance,
    tape_forward_kinematics, tensor_vec3, vec3_tensor, Capsule, Mat3, RobotModel, TapeFrames, Vec3,
};

/// Term weights and the latent prior scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveWeights {
    pub ee: f64,
    pub ori: f64,
    pub elb: f64,
    pub fin: f64,
    pub col: f64,
    /// Soft joint-limit weight, used only by the direct-angle baseline.
    pub lim: f64,
    pub sigma: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            ee: 1000.0,
            ori: 100.0,
            elb: 100.0,
            fin: 100.0,
            col: 1000.0,
            lim: 1000.0,
            sigma: 1.0,
        }
    }
}

impl ObjectiveWeights {
    /// All kinematic weights zero; only the latent prior remains.
    pub fn prior_only() -> Self {
        ObjectiveWeights {
            ee: 0.0,
            ori: 0.0,
            elb: 0.0,
            fin: 0.0,
            col: 0.0,
            lim: 0.0,
            sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("ee", self.ee),
            ("ori", self.ori),
            ("elb", self.elb),
            ("fin", self.fin),
            ("col", self.col),
            ("lim", self.lim),
        ];
        for (name, w) in named {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(format!("weight `{name}` must be a finite value >= 0")));
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("weight `sigma` must be positive"));
        }
        Ok(())
    }
}

/// Values of every term at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ee: f64,
    pub ori: f64,
    pub elb: f64,
    pub fin: f64,
    pub col: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `total` recomputed from the components.
    pub fn weighted_sum(&self, w: &ObjectiveWeights) -> f64 {
        w.ee * self.ee + w.ori * self.ori + w.elb * self.elb + w.fin * self.fin + w.col * self.col + self.reg
    }
}

/// Tape nodes of every term.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub ee: Var,
    pub ori: Var,
    pub elb: Var,
    pub fin: Var,
    pub col: Var,
    pub reg: Option<Var>,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            ee: tape.item(self.ee),
            ori: tape.item(self.ori),
            elb: tape.item(self.elb),
            fin: tape.item(self.fin),
            col: tape.item(self.col),
            reg: self.reg.map_or(0.0, |r| tape.item(r)),
            total: tape.item(self.total),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct FingerMatch {
    robot: usize,
    human: usize,
    meta_kp: usize,
    tip_kp: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct ChainMatch {
    chain: usize,
    side: usize,
    wrist_kp: usize,
    elbow_kp: usize,
    fingers: Vec<FingerMatch>,
}

/// Pairing of robot chains and fingers with demonstration keypoints, by side
/// label and finger name.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    chains: Vec<ChainMatch>,
}

impl Correspondence {
    pub fn new(model: &RobotModel) -> Result<Self> {
        let keypoints = HumanSkeleton::keypoints();
        let kp = |name: String| {
            keypoints
                .iter()
                .position(|k| *k == name)
                .ok_or_else(|| Error::usage(format!("no demonstration keypoint `{name}`")))
        };
        let mut chains = Vec::new();
        for (ci, c) in model.chains.iter().enumerate() {
            let side = crate::dataio::SIDES
                .iter()
                .position(|s| *s == c.side)
                .ok_or_else(|| Error::usage(format!("chain side `{}` has no demonstrator match", c.side)))?;
            let fingers = c
                .fingers
                .iter()
                .enumerate()
                .map(|(fi, f)| {
                    let human = crate::dataio::FINGERS
                        .iter()
                        .position(|n| *n == f.name)
                        .ok_or_else(|| Error::usage(format!("finger `{}` has no demonstrator match", f.name)))?;
                    Ok(FingerMatch {
                        robot: fi,
                        human,
                        meta_kp: kp(format!("{}_{}_meta", c.side, f.name))?,
                        tip_kp: kp(format!("{}_{}_tip", c.side, f.name))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            chains.push(ChainMatch {
                chain: ci,
                side,
                wrist_kp: kp(format!("{}_wrist", c.side))?,
                elbow_kp: kp(format!("{}_elbow", c.side))?,
                fingers,
            });
        }
        if chains.is_empty() {
            return Err(Error::usage("robot model has no chains"));
        }
        Ok(Correspondence { chains })
    }
}

fn zero(tape: &mut Tape) -> Var {
    tape.constant(Tensor::scalar(0.0))
}

fn add_all(tape: &mut Tape, terms: Vec<Var>) -> Var {
    let mut it = terms.into_iter();
    match it.next() {
        None => zero(tape),
        Some(first) => it.fold(first, |acc, t| tape.add(acc, t)),
    }
}

/// `|p / l - target|^2` for a `3 x 1` node `p`.
fn normalised_sq(tape: &mut Tape, p: Var, l: f64, target: &Vec3) -> Var {
    let scaled = tape.scale(p, 1.0 / l);
    let t = tape.constant(vec3_tensor(target));
    let d = tape.sub(scaled, t);
    let sq = tape.square(d);
    tape.sum(sq)
}

/// `sum_j |p_j / l_j - q_j / m_j|^2` over paired robot nodes `p_j` and
/// demonstration points `q_j`.
pub fn end_effector_loss(tape: &mut Tape, robot: &[(Var, f64)], demo: &[(Vec3, f64)]) -> Result<Var> {
    if robot.len() != demo.len() {
        return Err(Error::usage("end-effector sets differ in size"));
    }
    let terms = robot
        .iter()
        .zip(demo)
        .map(|(&(p, l), (q, m))| normalised_sq(tape, p, l, &(q / *m)))
        .collect();
    Ok(add_all(tape, terms))
}

/// `sum_j ||R_j - Rhat_j||_F^2` for `3 x 3` nodes `R_j`.
pub fn orientation_loss(tape: &mut Tape, robot: &[Var], demo: &[Mat3]) -> Result<Var> {
    if robot.len() != demo.len() {
        return Err(Error::usage("wrist sets differ in size"));
    }
    let mut terms = Vec::with_capacity(robot.len());
    for (&r, rh) in robot.iter().zip(demo) {
        if tape.value(r).shape() != (3, 3) {
            return Err(Error::usage("orientation terms need 3 x 3 rotations"));
        }
        let c = tape.constant(mat3_tensor(rh));
        let d = tape.sub(r, c);
        let sq = tape.square(d);
        terms.push(tape.sum(sq));
    }
    Ok(add_all(tape, terms))
}

/// `sum_j |(b_j - a_j) / l_j - (bh_j - ah_j) / m_j|^2`: the elbow and finger
/// terms. Each robot entry is `(a, b, l)`, each demo entry `(ah, bh, m)`.
pub fn segment_direction_loss(
    tape: &mut Tape,
    robot: &[(Var, Var, f64)],
    demo: &[(Vec3, Vec3, f64)],
) -> Result<Var> {
    if robot.len() != demo.len() {
        return Err(Error::usage("segment sets differ in size"));
    }
    let terms = robot
        .iter()
        .zip(demo)
        .map(|(&(a, b, l), &(ah, bh, m))| {
            let d = tape.sub(b, a);
            normalised_sq(tape, d, l, &((bh - ah) / m))
        })
        .collect();
    Ok(add_all(tape, terms))
}

/// `sum exp(-d^2)` over capsule pairs with surface distance `d < d_min`.
///
/// The comparison is a constant gate; only pairs inside the threshold are
/// recorded.
pub fn collision_loss(tape: &mut Tape, model: &RobotModel, frames: &TapeFrames) -> Var {
    let ends: Vec<(Var, Var)> = model
        .capsules
        .iter()
        .map(|c| {
            (
                frames.point(tape, c.a.joint, &c.a.offset),
                frames.point(tape, c.b.joint, &c.b.offset),
            )
        })
        .collect();
    let world: Vec<Capsule> = model
        .capsules
        .iter()
        .zip(&ends)
        .map(|(c, &(a, b))| Capsule {
            a: tensor_vec3(tape.value(a)),
            b: tensor_vec3(tape.value(b)),
            radius: c.radius,
        })
        .collect();
    let mut terms = Vec::new();
    for &(i, j) in model.collision_pairs() {
        if capsule_distance(&world[i], &world[j]) < model.d_min {
            let d = tape_capsule_distance(tape, ends[i], ends[j], world[i].radius + world[j].radius);
            let sq = tape.square(d);
            let neg = tape.neg(sq);
            terms.push(tape.exp(neg));
        }
    }
    add_all(tape, terms)
}

/// Capsule pairs of a posed model closer than `d_min`, with their distances.
pub fn colliding_pairs(model: &RobotModel, angles: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
    let fk = crate::kinematics::forward_kinematics(model, angles)?;
    let world = crate::kinematics::capsules_in_world(model, &fk);
    Ok(model
        .collision_pairs()
        .iter()
        .filter_map(|&(i, j)| {
            let d = capsule_distance(&world[i], &world[j]);
            (d < model.d_min).then_some((i, j, d))
        })
        .collect())
}

/// `sum_i max(0, a_i - upper_i)^2 + max(0, lower_i - a_i)^2` for an `n x 1`
/// node.
pub fn joint_limit_loss(tape: &mut Tape, angles: Var, lower: &[f64], upper: &[f64]) -> Var {
    let lo = tape.constant(Tensor::column(lower));
    let hi = tape.constant(Tensor::column(upper));
    let over = tape.sub(angles, hi);
    let under = tape.sub(lo, angles);
    let over = tape.relu(over);
    let under = tape.relu(under);
    let a = tape.square(over);
    let b = tape.square(under);
    let s = tape.add(a, b);
    tape.sum(s)
}

/// `|z|^2 / sigma^2`.
pub fn latent_prior(tape: &mut Tape, z: Var, sigma: f64) -> Var {
    let sq = tape.square(z);
    let s = tape.sum(sq);
    tape.scale(s, 1.0 / (sigma * sigma))
}

/// Record the full objective for joint angles `angles` (`n x 1`) against
/// one frame, adding the prior on `z` when given.
pub fn objective_on_tape(
    tape: &mut Tape,
    model: &RobotModel,
    corr: &Correspondence,
    demo: &DemoFrame,
    angles: Var,
    z: Option<Var>,
    w: &ObjectiveWeights,
) -> Result<LossVars> {
    let frames = tape_forward_kinematics(model, tape, angles)?;
    objective_from_frames(tape, model, corr, demo, &frames, z, w)
}

pub fn objective_from_frames(
    tape: &mut Tape,
    model: &RobotModel,
    corr: &Correspondence,
    demo: &DemoFrame,
    frames: &TapeFrames,
    z: Option<Var>,
    w: &ObjectiveWeights,
) -> Result<LossVars> {
    if demo.wrist_rotations.len() != demo.lengths.len() {
        return Err(Error::usage("demo frame has mismatched side counts"));
    }
    let norms = model.norms();
    let mut ee_r = Vec::new();
    let mut ee_d = Vec::new();
    let mut rot_r = Vec::new();
    let mut rot_d = Vec::new();
    let mut elb_r = Vec::new();
    let mut elb_d = Vec::new();
    let mut fin_r = Vec::new();
    let mut fin_d = Vec::new();
    for m in &corr.chains {
        let chain = &model.chains[m.chain];
        let n = &norms[m.chain];
        let hl = demo
            .lengths
            .get(m.side)
            .ok_or_else(|| Error::usage("demo frame lacks a side"))?;
        let pos = |k: usize| demo.positions[k];

        ee_r.push((frames.marker(tape, model, chain.end_effector), n.arm));
        ee_d.push((pos(m.wrist_kp), hl.arm));

        rot_r.push(frames.marker_rotation(tape, model, chain.wrist));
        rot_d.push(demo.wrist_rotations[m.side]);

        let we = frames.marker(tape, model, chain.elbow);
        let ww = frames.marker(tape, model, chain.wrist);
        elb_r.push((we, ww, n.forearm));
        elb_d.push((pos(m.elbow_kp), pos(m.wrist_kp), hl.forearm));

        for f in &m.fingers {
            let rf = &chain.fingers[f.robot];
            let meta = frames.marker(tape, model, rf.meta);
            let tip = frames.marker(tape, model, rf.tip);
            fin_r.push((meta, tip, n.fingers[f.robot]));
            fin_d.push((pos(f.meta_kp), pos(f.tip_kp), hl.fingers[f.human]));
        }
    }
    let ee = end_effector_loss(tape, &ee_r, &ee_d)?;
    let ori = orientation_loss(tape, &rot_r, &rot_d)?;
    let elb = segment_direction_loss(tape, &elb_r, &elb_d)?;
    let fin = segment_direction_loss(tape, &fin_r, &fin_d)?;
    let col = collision_loss(tape, model, frames);
    let reg = z.map(|z| latent_prior(tape, z, w.sigma));

    let mut parts = Vec::with_capacity(6);
    for (v, k) in [(ee, w.ee), (ori, w.ori), (elb, w.elb), (fin, w.fin), (col, w.col)] {
        parts.push(tape.scale(v, k));
    }
    parts.extend(reg);
    let total = add_all(tape, parts);
    Ok(LossVars {
        ee,
        ori,
        elb,
        fin,
        col,
        reg,
        total,
    })
}

/// Objective at fixed joint angles, without the prior.
pub fn evaluate_angles(
    model: &RobotModel,
    corr: &Correspondence,
    demo: &DemoFrame,
    angles: &[f64],
    w: &ObjectiveWeights,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::column(angles));
    let vars = objective_on_tape(&mut tape, model, corr, demo, a, None, w)?;
    Ok(vars.breakdown(&tape))
}

/// The frame a robot pose would produce: robot markers and wrist rotations
/// become keypoints and the robot's lengths become the demonstrator's, so
/// every kinematic term vanishes at `angles`.
///
/// Keypoints without a robot counterpart are copied from `template`.
pub fn demo_from_robot_pose(model: &RobotModel, angles: &[f64], template: &DemoFrame) -> Result<DemoFrame> {
    let corr = Correspondence::new(model)?;
    let fk = crate::kinematics::forward_kinematics(model, angles)?;
    let marks = crate::kinematics::marker_positions(model, &fk);
    let mut out = template.clone();
    for m in &corr.chains {
        let chain = &model.chains[m.chain];
        out.positions[m.wrist_kp] = marks[chain.end_effector];
        out.positions[m.elbow_kp] = marks[chain.elbow];
        let wm = &model.markers[chain.wrist];
        out.wrist_rotations[m.side] = fk.rotations[wm.joint] * crate::kinematics::rpy_matrix(&wm.rpy);
        let n = &model.norms()[m.chain];
        out.lengths[m.side].arm = n.arm;
        out.lengths[m.side].forearm = n.forearm;
        for f in &m.fingers {
            let rf = &chain.fingers[f.robot];
            out.positions[f.meta_kp] = marks[rf.meta];
            out.positions[f.tip_kp] = marks[rf.tip];
            out.lengths[m.side].fingers[f.human] = n.fingers[f.robot];
        }
    }
    Ok(out)
}
