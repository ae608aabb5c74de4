//! Kinematic trees, forward kinematics and capsule geometry.
//!
//! A joint frame is `parent * fixed(offset, rpy) * rotation(axis, angle)`.
//! Fixed rotations use `Rz(yaw) * Ry(pitch) * Rx(roll)`.

mod bundled;
mod capsule;
mod fk;
pub mod format;
mod model;

use nalgebra::{Matrix3, Vector3};

pub use bundled::{bundled_model, BUNDLED_MODELS};
pub use capsule::{
    capsule_distance, closest_parameters, segment_distance, tape_capsule_distance, Capsule,
};
pub use fk::{
    capsules_in_world, forward_kinematics, marker_position, marker_positions, tape_forward_kinematics,
    FrameTransforms, TapeFrames,
};
pub use model::{
    CapsuleSpec, Chain, ChainNorms, Finger, JointSpec, Marker, NodeType, RobotModel, Site,
    DEFAULT_D_MIN,
};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// `Rz(rpy.z) * Ry(rpy.y) * Rx(rpy.x)`.
pub fn rpy_matrix(rpy: &Vec3) -> Mat3 {
    let (sr, cr) = rpy.x.sin_cos();
    let (sp, cp) = rpy.y.sin_cos();
    let (sy, cy) = rpy.z.sin_cos();
    let rx = Mat3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let ry = Mat3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rz = Mat3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

/// Cross-product matrix: `skew(a) * b == a x b`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Rotation by `angle` about the unit `axis`.
pub fn axis_rotation(axis: &Vec3, angle: f64) -> Mat3 {
    let k = skew(axis);
    let (s, c) = angle.sin_cos();
    Mat3::identity() + k * s + k * k * (1.0 - c)
}

/// `max |R R^T - I|` entrywise.
pub fn orthonormality_error(r: &Mat3) -> f64 {
    (r * r.transpose() - Mat3::identity()).abs().max()
}

pub(crate) fn mat3_tensor(m: &Mat3) -> crate::autodiff::Tensor {
    crate::autodiff::Tensor::from_fn(3, 3, |r, c| m[(r, c)])
}

pub(crate) fn vec3_tensor(v: &Vec3) -> crate::autodiff::Tensor {
    crate::autodiff::Tensor::column(v.as_slice())
}

#[cfg(test)]
pub(crate) fn tensor_mat3(t: &crate::autodiff::Tensor) -> Mat3 {
    Mat3::from_fn(|r, c| t.get(r, c))
}

pub(crate) fn tensor_vec3(t: &crate::autodiff::Tensor) -> Vec3 {
    Vec3::new(t.as_slice()[0], t.as_slice()[1], t.as_slice()[2])
}
