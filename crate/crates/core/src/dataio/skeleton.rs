use crate::error::{Error, Result};
use crate::kinematics::{
    CapsuleSpec, Chain, Finger, JointSpec, Marker, NodeType, RobotModel, Site, Vec3,
};

pub const SIDES: [&str; 2] = ["l", "r"];
pub const FINGERS: [&str; 5] = ["thumb", "index", "middle", "ring", "little"];

/// Canonical two-arm, two-hand demonstrator.
///
/// Each shoulder and wrist has three joints about z, y, x (so the composite
/// rotation is `Rz * Ry * Rx`), the elbow one joint about y, each finger one
/// flexion joint about x. Zero pose: arms hanging along -Z, palms facing the
/// body midline.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanSkeleton {
    pub shoulder_half_width: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    /// Metacarpal-to-tip lengths in [`FINGERS`] order.
    pub fingers: [f64; 5],
}

impl Default for HumanSkeleton {
    fn default() -> Self {
        HumanSkeleton {
            shoulder_half_width: 0.2,
            upper_arm: 0.30,
            forearm: 0.25,
            fingers: [0.08, 0.09, 0.10, 0.095, 0.08],
        }
    }
}

/// Wrist-frame offsets of the metacarpal joints, in [`FINGERS`] order.
const META_OFFSETS: [[f64; 3]; 5] = [
    [0.04, 0.0, -0.03],
    [0.03, 0.0, -0.09],
    [0.01, 0.0, -0.095],
    [-0.01, 0.0, -0.09],
    [-0.03, 0.0, -0.08],
];

/// Degrees of freedom per side: shoulder 3, elbow 1, wrist 3, fingers 5.
pub const HUMAN_DOF_PER_SIDE: usize = 12;

impl HumanSkeleton {
    pub fn validate(&self) -> Result<()> {
        let all = [self.shoulder_half_width, self.upper_arm, self.forearm]
            .into_iter()
            .chain(self.fingers);
        if all.into_iter().any(|l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Validation("skeleton lengths must be positive".into()));
        }
        Ok(())
    }

    /// Keypoint names in demo order: per side shoulder, elbow, wrist, then
    /// each finger's metacarpal and tip.
    pub fn keypoints() -> Vec<String> {
        let mut out = Vec::with_capacity(26);
        for s in SIDES {
            for k in ["shoulder", "elbow", "wrist"] {
                out.push(format!("{s}_{k}"));
            }
            for f in FINGERS {
                out.push(format!("{s}_{f}_meta"));
                out.push(format!("{s}_{f}_tip"));
            }
        }
        out
    }

    /// Structural links between keypoints, by keypoint index.
    pub fn links() -> Vec<(usize, usize)> {
        let per_side = 3 + 2 * FINGERS.len();
        let mut out = vec![(0, per_side)];
        for side in 0..2 {
            let b = side * per_side;
            out.push((b, b + 1));
            out.push((b + 1, b + 2));
            for f in 0..FINGERS.len() {
                let meta = b + 3 + 2 * f;
                out.push((b + 2, meta));
                out.push((meta, meta + 1));
            }
        }
        out
    }

    /// Keypoint node types: arm keypoints then hand keypoints per side.
    pub fn keypoint_types() -> Vec<NodeType> {
        let mut out = Vec::new();
        for _ in SIDES {
            out.extend([NodeType::Arm; 3]);
            out.extend([NodeType::Hand; 10]);
        }
        out
    }

    /// The demonstrator as a kinematic model. Markers follow
    /// [`HumanSkeleton::keypoints`] order.
    pub fn model(&self) -> Result<RobotModel> {
        self.validate()?;
        let pi = std::f64::consts::PI;
        let mut joints = Vec::new();
        let mut markers = Vec::new();
        let mut capsules = Vec::new();
        let mut chains = Vec::new();
        for (side_i, s) in SIDES.iter().enumerate() {
            let sign = if side_i == 0 { 1.0 } else { -1.0 };
            let mut add = |name: String, parent: Option<usize>, offset: Vec3, axis: Vec3, node_type| {
                joints.push(JointSpec {
                    name,
                    parent,
                    origin_offset: offset,
                    origin_rpy: Vec3::zeros(),
                    axis,
                    lower: -pi,
                    upper: pi,
                    node_type,
                });
                joints.len() - 1
            };
            let sh_z = add(format!("{s}_shoulder_z"), None, Vec3::new(0.0, sign * self.shoulder_half_width, 0.0), Vec3::z(), NodeType::Arm);
            let sh_y = add(format!("{s}_shoulder_y"), Some(sh_z), Vec3::zeros(), Vec3::y(), NodeType::Arm);
            let sh_x = add(format!("{s}_shoulder_x"), Some(sh_y), Vec3::zeros(), Vec3::x(), NodeType::Arm);
            let elbow = add(format!("{s}_elbow_y"), Some(sh_x), Vec3::new(0.0, 0.0, -self.upper_arm), Vec3::y(), NodeType::Arm);
            let wr_z = add(format!("{s}_wrist_z"), Some(elbow), Vec3::new(0.0, 0.0, -self.forearm), Vec3::z(), NodeType::Arm);
            let wr_y = add(format!("{s}_wrist_y"), Some(wr_z), Vec3::zeros(), Vec3::y(), NodeType::Arm);
            let wr_x = add(format!("{s}_wrist_x"), Some(wr_y), Vec3::zeros(), Vec3::x(), NodeType::Arm);
            let finger_joints: Vec<usize> = FINGERS
                .iter()
                .zip(META_OFFSETS)
                .map(|(f, off)| add(format!("{s}_{f}"), Some(wr_x), Vec3::from(off), Vec3::x(), NodeType::Hand))
                .collect();

            let base = markers.len();
            let mut mark = |name: String, joint: usize, offset: Vec3| {
                markers.push(Marker {
                    name,
                    joint,
                    offset,
                    rpy: Vec3::zeros(),
                });
            };
            mark(format!("{s}_shoulder"), sh_z, Vec3::zeros());
            mark(format!("{s}_elbow"), elbow, Vec3::zeros());
            mark(format!("{s}_wrist"), wr_x, Vec3::zeros());
            for ((f, &j), &len) in FINGERS.iter().zip(&finger_joints).zip(&self.fingers) {
                mark(format!("{s}_{f}_meta"), j, Vec3::zeros());
                mark(format!("{s}_{f}_tip"), j, Vec3::new(0.0, 0.0, -len));
            }
            let site = |name: &str, joint: usize| Site {
                name: name.to_string(),
                joint,
                offset: Vec3::zeros(),
            };
            capsules.push(CapsuleSpec {
                a: site(&format!("{s}_shoulder_z"), sh_z),
                b: site(&format!("{s}_elbow_y"), elbow),
                radius: 0.05,
            });
            capsules.push(CapsuleSpec {
                a: site(&format!("{s}_elbow_y"), elbow),
                b: site(&format!("{s}_wrist_z"), wr_z),
                radius: 0.04,
            });
            chains.push(Chain {
                side: s.to_string(),
                shoulder: base,
                elbow: base + 1,
                wrist: base + 2,
                end_effector: base + 2,
                fingers: FINGERS
                    .iter()
                    .enumerate()
                    .map(|(k, f)| Finger {
                        name: f.to_string(),
                        meta: base + 3 + 2 * k,
                        tip: base + 4 + 2 * k,
                    })
                    .collect(),
            });
        }
        RobotModel::new("human", joints, markers, capsules, chains, crate::kinematics::DEFAULT_D_MIN)
    }

    /// Index of the first joint of a side's block in the human model.
    pub fn side_offset(side: usize) -> usize {
        side * HUMAN_DOF_PER_SIDE
    }
}
