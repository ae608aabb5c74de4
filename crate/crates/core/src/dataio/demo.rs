use super::skeleton::HumanSkeleton;
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, marker_positions, orthonormality_error, ChainNorms, Mat3, RobotModel, Vec3};

/// Rotations further than this from orthonormal are rejected.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Largest keypoint displacement allowed between consecutive frames, meters.
pub const MAX_STEP: f64 = 0.5;

/// One demonstration frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoFrame {
    /// Keypoint positions in [`HumanSkeleton::keypoints`] order, meters.
    pub positions: Vec<Vec3>,
    /// Wrist rotations in side order.
    pub wrist_rotations: Vec<Mat3>,
    /// Normalisation lengths in side order.
    pub lengths: Vec<ChainNorms>,
}

impl DemoFrame {
    /// Frame produced by posing `human` (a model from
    /// [`HumanSkeleton::model`] or any model with matching marker order).
    pub fn from_pose(human: &RobotModel, angles: &[f64]) -> Result<DemoFrame> {
        let fk = forward_kinematics(human, angles)?;
        Ok(DemoFrame {
            positions: marker_positions(human, &fk),
            wrist_rotations: human
                .chains
                .iter()
                .map(|c| {
                    let m = &human.markers[c.wrist];
                    fk.rotations[m.joint] * crate::kinematics::rpy_matrix(&m.rpy)
                })
                .collect(),
            lengths: human.norms().to_vec(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.positions.iter().all(|p| p.iter().all(|x| x.is_finite())) {
            return Err(Error::Validation("non-finite keypoint position".into()));
        }
        for (i, r) in self.wrist_rotations.iter().enumerate() {
            let err = orthonormality_error(r);
            if !(err <= ROTATION_TOLERANCE) || !((r.determinant() - 1.0).abs() <= ROTATION_TOLERANCE) {
                return Err(Error::Validation(format!(
                    "wrist rotation {i} is not a rotation (orthonormality error {err:e})"
                )));
            }
        }
        for l in &self.lengths {
            if !(l.arm > 0.0 && l.forearm > 0.0 && l.fingers.iter().all(|&f| f > 0.0)) {
                return Err(Error::Validation("normalisation lengths must be positive".into()));
            }
        }
        Ok(())
    }
}

/// A demonstration: frames sampled every `dt` seconds on one skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoSequence {
    pub label: String,
    pub dt: f64,
    pub skeleton: HumanSkeleton,
    pub frames: Vec<DemoFrame>,
}

impl DemoSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.skeleton.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation("dt must be positive".into()));
        }
        let n_kp = HumanSkeleton::keypoints().len();
        let first_lengths = self.frames.first().map(|f| &f.lengths);
        for (t, f) in self.frames.iter().enumerate() {
            if f.positions.len() != n_kp || f.wrist_rotations.len() != 2 || f.lengths.len() != 2 {
                return Err(Error::Validation(format!("frame {t}: wrong keypoint count")));
            }
            if Some(&f.lengths) != first_lengths {
                return Err(Error::Validation(format!("frame {t}: lengths differ from frame 0")));
            }
            f.validate()
                .map_err(|e| Error::Validation(format!("frame {t}: {e}")))?;
            if t > 0 {
                let prev = &self.frames[t - 1];
                let step = f
                    .positions
                    .iter()
                    .zip(&prev.positions)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                if !(step < MAX_STEP) {
                    return Err(Error::Validation(format!(
                        "frame {t}: keypoint moved {step:.3} m in one frame"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Trajectory of one keypoint across the sequence.
    pub fn keypoint_track(&self, keypoint: usize) -> Vec<Vec3> {
        self.frames.iter().map(|f| f.positions[keypoint]).collect()
    }
}
