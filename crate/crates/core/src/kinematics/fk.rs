use super::capsule::Capsule;
use super::{axis_rotation, mat3_tensor, rpy_matrix, skew, vec3_tensor, Mat3, RobotModel, Site, Vec3};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Per-joint pose in the base frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTransforms {
    pub rotations: Vec<Mat3>,
    pub translations: Vec<Vec3>,
}

impl FrameTransforms {
    pub fn site(&self, site: &Site) -> Vec3 {
        self.translations[site.joint] + self.rotations[site.joint] * site.offset
    }
}

/// Plain forward kinematics. Limits are not enforced.
pub fn forward_kinematics(model: &RobotModel, angles: &[f64]) -> Result<FrameTransforms> {
    check_len(model, angles.len())?;
    let n = model.joints.len();
    let mut rotations: Vec<Mat3> = Vec::with_capacity(n);
    let mut translations: Vec<Vec3> = Vec::with_capacity(n);
    for (j, &theta) in model.joints.iter().zip(angles) {
        let (rp, tp) = match j.parent {
            Some(p) => (rotations[p], translations[p]),
            None => (Mat3::identity(), Vec3::zeros()),
        };
        translations.push(tp + rp * j.origin_offset);
        rotations.push(rp * rpy_matrix(&j.origin_rpy) * axis_rotation(&j.axis, theta));
    }
    Ok(FrameTransforms {
        rotations,
        translations,
    })
}

/// Marker positions in model order.
pub fn marker_positions(model: &RobotModel, frames: &FrameTransforms) -> Vec<Vec3> {
    model
        .markers
        .iter()
        .map(|m| frames.translations[m.joint] + frames.rotations[m.joint] * m.offset)
        .collect()
}

pub fn marker_position(model: &RobotModel, frames: &FrameTransforms, name: &str) -> Result<Vec3> {
    let i = model
        .marker_index(name)
        .ok_or_else(|| Error::usage(format!("unknown marker `{name}`")))?;
    let m = &model.markers[i];
    Ok(frames.translations[m.joint] + frames.rotations[m.joint] * m.offset)
}

/// World-frame capsules in model order.
pub fn capsules_in_world(model: &RobotModel, frames: &FrameTransforms) -> Vec<Capsule> {
    model
        .capsules
        .iter()
        .map(|c| Capsule {
            a: frames.site(&c.a),
            b: frames.site(&c.b),
            radius: c.radius,
        })
        .collect()
}

fn check_len(model: &RobotModel, n: usize) -> Result<()> {
    if n != model.joints.len() {
        return Err(Error::usage(format!(
            "expected {} joint angles, got {n}",
            model.joints.len()
        )));
    }
    Ok(())
}

/// Forward kinematics recorded on a tape: `3 x 3` rotation and `3 x 1`
/// translation nodes per joint.
#[derive(Clone, Debug)]
pub struct TapeFrames {
    pub rotations: Vec<Var>,
    pub translations: Vec<Var>,
}

impl TapeFrames {
    /// Position node of a point fixed in a joint frame.
    pub fn point(&self, tape: &mut Tape, joint: usize, offset: &Vec3) -> Var {
        let t = self.translations[joint];
        if offset.norm() == 0.0 {
            return t;
        }
        let off = tape.constant(vec3_tensor(offset));
        let r = tape.matmul(self.rotations[joint], off);
        tape.add(t, r)
    }

    pub fn marker(&self, tape: &mut Tape, model: &RobotModel, marker: usize) -> Var {
        let m = &model.markers[marker];
        self.point(tape, m.joint, &m.offset)
    }

    /// Rotation node of a marker frame.
    pub fn marker_rotation(&self, tape: &mut Tape, model: &RobotModel, marker: usize) -> Var {
        let m = &model.markers[marker];
        let r = self.rotations[m.joint];
        if m.rpy.norm() == 0.0 {
            return r;
        }
        let fixed = tape.constant(mat3_tensor(&rpy_matrix(&m.rpy)));
        tape.matmul(r, fixed)
    }
}

/// `angles` is an `n x 1` node.
pub fn tape_forward_kinematics(model: &RobotModel, tape: &mut Tape, angles: Var) -> Result<TapeFrames> {
    let shape = tape.value(angles).shape();
    if shape.1 != 1 {
        return Err(Error::usage("joint angles must be a column"));
    }
    check_len(model, shape.0)?;
    let n = model.joints.len();
    let mut rotations: Vec<Var> = Vec::with_capacity(n);
    let mut translations: Vec<Var> = Vec::with_capacity(n);
    for (i, j) in model.joints.iter().enumerate() {
        let theta = tape.index(angles, i);
        let s = tape.sin(theta);
        let c = tape.cos(theta);
        // R(axis, t) = (I + K^2) + sin t K - cos t K^2
        let k = skew(&j.axis);
        let k2 = k * k;
        let base = tape.constant(mat3_tensor(&(Mat3::identity() + k2)));
        let kv = tape.constant(mat3_tensor(&k));
        let k2v = tape.constant(mat3_tensor(&k2));
        let sk = tape.mul(kv, s);
        let ck = tape.mul(k2v, c);
        let d = tape.sub(sk, ck);
        let local = tape.add(base, d);

        let fixed = rpy_matrix(&j.origin_rpy);
        let fixed_is_identity = j.origin_rpy.norm() == 0.0;
        let (rot, pos) = match j.parent {
            Some(p) => {
                let rp = rotations[p];
                let off = tape.constant(vec3_tensor(&j.origin_offset));
                let moved = tape.matmul(rp, off);
                let pos = tape.add(translations[p], moved);
                let m = if fixed_is_identity {
                    rp
                } else {
                    let f = tape.constant(mat3_tensor(&fixed));
                    tape.matmul(rp, f)
                };
                (tape.matmul(m, local), pos)
            }
            None => {
                let pos = tape.constant(vec3_tensor(&j.origin_offset));
                let rot = if fixed_is_identity {
                    local
                } else {
                    let f = tape.constant(mat3_tensor(&fixed));
                    tape.matmul(f, local)
                };
                (rot, pos)
            }
        };
        rotations.push(rot);
        translations.push(pos);
    }
    Ok(TapeFrames {
        rotations,
        translations,
    })
}

/// Tape FK values as plain frames.
#[cfg(test)]
pub(crate) fn tape_values(tape: &Tape, frames: &TapeFrames) -> FrameTransforms {
    FrameTransforms {
        rotations: frames
            .rotations
            .iter()
            .map(|&r| super::tensor_mat3(tape.value(r)))
            .collect(),
        translations: frames
            .translations
            .iter()
            .map(|&t| super::tensor_vec3(tape.value(t)))
            .collect(),
    }
}
