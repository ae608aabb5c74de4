use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Mat3, Vec3};
use crate::error::{Error, Result};

/// Which weight set a joint's graph node uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Arm,
    Hand,
}

impl NodeType {
    pub fn index(self) -> usize {
        match self {
            NodeType::Arm => 0,
            NodeType::Hand => 1,
        }
    }
}

/// One revolute joint. Frames compose as
/// `parent * fixed(offset, rpy) * rotation(axis, angle)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSpec {
    pub name: String,
    /// Index of the parent joint; `None` attaches to the base frame.
    pub parent: Option<usize>,
    pub origin_offset: Vec3,
    pub origin_rpy: Vec3,
    pub axis: Vec3,
    pub lower: f64,
    pub upper: f64,
    pub node_type: NodeType,
}

/// A point rigidly attached to a joint frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Marker {
    pub name: String,
    pub joint: usize,
    pub offset: Vec3,
    pub rpy: Vec3,
}

/// Capsule endpoint: a joint origin or a marker site, by name.
#[derive(Clone, Debug, PartialEq)]
pub struct Site {
    pub name: String,
    pub joint: usize,
    pub offset: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CapsuleSpec {
    pub a: Site,
    pub b: Site,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Finger {
    pub name: String,
    pub meta: usize,
    pub tip: usize,
}

/// Marker indices for one arm and its hand.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    /// Side label shared with the human skeleton (`l` or `r`).
    pub side: String,
    pub shoulder: usize,
    pub elbow: usize,
    pub wrist: usize,
    pub end_effector: usize,
    pub fingers: Vec<Finger>,
}

/// Normalisation lengths of one chain, measured on the zero pose.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainNorms {
    /// Shoulder to wrist along the chain.
    pub arm: f64,
    /// Elbow to wrist.
    pub forearm: f64,
    /// Metacarpal to fingertip, one per finger of the chain.
    pub fingers: Vec<f64>,
}

/// Kinematic tree with limits, capsules, marker sites and chains.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub joints: Vec<JointSpec>,
    pub markers: Vec<Marker>,
    pub capsules: Vec<CapsuleSpec>,
    pub chains: Vec<Chain>,
    /// Collision threshold on capsule surface distance, meters.
    pub d_min: f64,
    norms: Vec<ChainNorms>,
    collision_pairs: Vec<(usize, usize)>,
}

pub const DEFAULT_D_MIN: f64 = 0.02;

impl RobotModel {
    /// Validate the parts and derive norm lengths and the collision pair set.
    pub fn new(
        name: impl Into<String>,
        joints: Vec<JointSpec>,
        markers: Vec<Marker>,
        capsules: Vec<CapsuleSpec>,
        chains: Vec<Chain>,
        d_min: f64,
    ) -> Result<Self> {
        let mut model = RobotModel {
            name: name.into(),
            joints,
            markers,
            capsules,
            chains,
            d_min,
            norms: Vec::new(),
            collision_pairs: Vec::new(),
        };
        model.validate()?;
        model.norms = model.chains.iter().map(|c| model.chain_norms(c)).collect();
        for (c, n) in model.chains.iter().zip(&model.norms) {
            if !(n.arm > 0.0 && n.forearm > 0.0 && n.fingers.iter().all(|&l| l > 0.0)) {
                return Err(Error::Validation(format!(
                    "chain `{}` has a zero normalisation length",
                    c.side
                )));
            }
        }
        model.collision_pairs = model.compute_collision_pairs();
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let mut names = HashMap::new();
        for (i, j) in self.joints.iter().enumerate() {
            if names.insert(j.name.as_str(), i).is_some() {
                return Err(Error::Validation(format!("duplicate joint `{}`", j.name)));
            }
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(Error::Validation(format!(
                        "joint `{}` must come after its parent",
                        j.name
                    )));
                }
            }
            if !(j.lower < j.upper) {
                return Err(Error::Validation(format!(
                    "joint `{}`: lower limit {} must be below upper {}",
                    j.name, j.lower, j.upper
                )));
            }
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "joint `{}`: axis is not unit length",
                    j.name
                )));
            }
        }
        for m in &self.markers {
            if m.joint >= self.joints.len() {
                return Err(Error::Validation(format!(
                    "marker `{}` references a missing joint",
                    m.name
                )));
            }
        }
        for c in &self.capsules {
            if !(c.radius > 0.0) {
                return Err(Error::Validation(format!(
                    "capsule {}-{}: radius must be positive",
                    c.a.name, c.b.name
                )));
            }
        }
        if !(self.d_min > 0.0) {
            return Err(Error::Validation("d_min must be positive".into()));
        }
        let nm = self.markers.len();
        for c in &self.chains {
            let ids = [c.shoulder, c.elbow, c.wrist, c.end_effector]
                .into_iter()
                .chain(c.fingers.iter().flat_map(|f| [f.meta, f.tip]));
            if ids.into_iter().any(|i| i >= nm) {
                return Err(Error::Validation(format!(
                    "chain `{}` references a missing marker",
                    c.side
                )));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn marker_index(&self, name: &str) -> Option<usize> {
        self.markers.iter().position(|m| m.name == name)
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.lower).collect()
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.upper).collect()
    }

    pub fn within_limits(&self, angles: &[f64]) -> bool {
        self.limit_violations(angles) == 0
    }

    pub fn limit_violations(&self, angles: &[f64]) -> usize {
        self.joints
            .iter()
            .zip(angles)
            .filter(|(j, &a)| !(a >= j.lower && a <= j.upper))
            .count()
    }

    pub fn norms(&self) -> &[ChainNorms] {
        &self.norms
    }

    pub fn chain(&self, side: &str) -> Option<(&Chain, &ChainNorms)> {
        self.chains
            .iter()
            .zip(&self.norms)
            .find(|(c, _)| c.side == side)
    }

    /// Capsule index pairs checked by the collision loss.
    pub fn collision_pairs(&self) -> &[(usize, usize)] {
        &self.collision_pairs
    }

    pub fn has_hands(&self) -> bool {
        self.chains.iter().any(|c| !c.fingers.is_empty())
    }

    /// Joints on the path from the base to `joint`, root first.
    pub fn ancestry(&self, joint: usize) -> Vec<usize> {
        let mut path = vec![joint];
        let mut cur = joint;
        while let Some(p) = self.joints[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn is_ancestor(&self, ancestor: usize, joint: usize) -> bool {
        let mut cur = Some(joint);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.joints[c].parent;
        }
        false
    }

    /// Joints of the subtree rooted at `root`, in model order.
    pub fn subtree_joints(&self, root: usize) -> Vec<usize> {
        (0..self.joints.len())
            .filter(|&j| self.is_ancestor(root, j))
            .collect()
    }

    /// The subtree rooted at `root` as a standalone model attached directly to
    /// the base. Markers on the subtree are kept; capsules and chains dropped.
    pub fn subtree(&self, root: usize) -> Result<RobotModel> {
        let keep = self.subtree_joints(root);
        let remap: HashMap<usize, usize> = keep.iter().enumerate().map(|(n, &o)| (o, n)).collect();
        let joints = keep
            .iter()
            .map(|&o| {
                let mut j = self.joints[o].clone();
                j.parent = if o == root {
                    None
                } else {
                    j.parent.map(|p| remap[&p])
                };
                j
            })
            .collect();
        let markers = self
            .markers
            .iter()
            .filter(|m| remap.contains_key(&m.joint))
            .map(|m| Marker {
                joint: remap[&m.joint],
                ..m.clone()
            })
            .collect();
        RobotModel::new(
            format!("{}/{}", self.name, self.joints[root].name),
            joints,
            markers,
            Vec::new(),
            Vec::new(),
            self.d_min,
        )
    }

    /// Zero-pose position of a site, from the plain forward kinematics.
    fn zero_pose_site(&self, joint: usize, offset: &Vec3) -> Vec3 {
        let mut rot = Mat3::identity();
        let mut pos = Vec3::zeros();
        for j in self.ancestry(joint) {
            let spec = &self.joints[j];
            pos += rot * spec.origin_offset;
            rot *= super::rpy_matrix(&spec.origin_rpy);
        }
        pos + rot * offset
    }

    fn marker_zero(&self, m: usize) -> Vec3 {
        let mk = &self.markers[m];
        self.zero_pose_site(mk.joint, &mk.offset)
    }

    /// Sum of segment lengths along the tree from marker `from` to marker `to`.
    ///
    /// The path runs through every joint origin between the two markers'
    /// joints; when one joint is an ancestor of the other this is the chain of
    /// link segments between them.
    pub fn path_length(&self, from: usize, to: usize) -> f64 {
        let a = self.markers[from].joint;
        let b = self.markers[to].joint;
        let pa = self.ancestry(a);
        let pb = self.ancestry(b);
        let common = pa.iter().zip(&pb).take_while(|(x, y)| x == y).count();
        let mut points = vec![self.marker_zero(from)];
        for &j in pa[common.saturating_sub(1)..].iter().rev() {
            points.push(self.zero_pose_site(j, &Vec3::zeros()));
        }
        // with no common joint the path passes through the base origin
        if common == 0 {
            points.push(Vec3::zeros());
        }
        for &j in &pb[common..] {
            points.push(self.zero_pose_site(j, &Vec3::zeros()));
        }
        points.push(self.marker_zero(to));
        points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    fn chain_norms(&self, c: &Chain) -> ChainNorms {
        ChainNorms {
            arm: self.path_length(c.shoulder, c.wrist),
            forearm: self.path_length(c.elbow, c.wrist),
            fingers: c
                .fingers
                .iter()
                .map(|f| self.path_length(f.meta, f.tip))
                .collect(),
        }
    }

    /// Chain owning a joint: the chain whose shoulder marker joint is an
    /// ancestor of it.
    pub fn joint_chain(&self, joint: usize) -> Option<usize> {
        self.chains.iter().position(|c| {
            let root = self.markers[c.shoulder].joint;
            self.is_ancestor(root, joint)
        })
    }

    /// Joints on the tree path spanned by a capsule.
    fn capsule_joints(&self, c: &CapsuleSpec) -> Vec<usize> {
        let pa = self.ancestry(c.a.joint);
        let pb = self.ancestry(c.b.joint);
        let common = pa.iter().zip(&pb).take_while(|(x, y)| x == y).count();
        let mut out: Vec<usize> = pa[common.saturating_sub(1)..].to_vec();
        out.extend_from_slice(&pb[common..]);
        if common == 0 {
            out = pa.into_iter().chain(pb).collect();
        }
        out
    }

    /// Tree distance between two joints counting only links of nonzero length.
    fn link_distance(&self, a: usize, b: usize) -> usize {
        let pa = self.ancestry(a);
        let pb = self.ancestry(b);
        let common = pa.iter().zip(&pb).take_while(|(x, y)| x == y).count();
        if common == 0 {
            return usize::MAX;
        }
        let physical = |j: usize| self.joints[j].origin_offset.norm() > 1e-12;
        pa[common..].iter().filter(|&&j| physical(j)).count()
            + pb[common..].iter().filter(|&&j| physical(j)).count()
    }

    fn compute_collision_pairs(&self) -> Vec<(usize, usize)> {
        let owner: Vec<Option<usize>> = self
            .capsules
            .iter()
            .map(|c| self.joint_chain(c.a.joint).or_else(|| self.joint_chain(c.b.joint)))
            .collect();
        let spans: Vec<Vec<usize>> = self.capsules.iter().map(|c| self.capsule_joints(c)).collect();
        let mut pairs = Vec::new();
        for i in 0..self.capsules.len() {
            for j in i + 1..self.capsules.len() {
                let include = match (owner[i], owner[j]) {
                    (Some(a), Some(b)) if a != b => true,
                    _ => {
                        let sep = spans[i]
                            .iter()
                            .flat_map(|&x| spans[j].iter().map(move |&y| (x, y)))
                            .map(|(x, y)| self.link_distance(x, y))
                            .min()
                            .unwrap_or(usize::MAX);
                        sep >= 2
                    }
                };
                if include {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joint(name: &str, parent: Option<usize>, offset: [f64; 3]) -> JointSpec {
        JointSpec {
            name: name.into(),
            parent,
            origin_offset: Vec3::from(offset),
            origin_rpy: Vec3::zeros(),
            axis: Vec3::z(),
            lower: -1.0,
            upper: 1.0,
            node_type: NodeType::Arm,
        }
    }

    #[test]
    fn rejects_inverted_limits_and_bad_axis() {
        let mut j = joint("a", None, [0.0; 3]);
        j.lower = 1.0;
        j.upper = -1.0;
        let err = RobotModel::new("m", vec![j], vec![], vec![], vec![], 0.02).unwrap_err();
        assert!(err.to_string().contains("lower limit"));

        let mut j = joint("a", None, [0.0; 3]);
        j.axis = Vec3::new(0.0, 0.0, 2.0);
        assert!(RobotModel::new("m", vec![j], vec![], vec![], vec![], 0.02).is_err());
    }

    #[test]
    fn subtree_reindexes_parents() {
        let joints = vec![
            joint("a", None, [0.0, 0.0, 0.0]),
            joint("b", Some(0), [1.0, 0.0, 0.0]),
            joint("c", Some(1), [1.0, 0.0, 0.0]),
        ];
        let m = RobotModel::new("m", joints, vec![], vec![], vec![], 0.02).unwrap();
        let sub = m.subtree(1).unwrap();
        assert_eq!(sub.joints.len(), 2);
        assert_eq!(sub.joints[0].parent, None);
        assert_eq!(sub.joints[1].parent, Some(0));
    }
}
