use std::sync::Arc;

use crate::autodiff::Tensor;
use crate::dataio::{DemoFrame, HumanSkeleton};
use crate::error::{Error, Result};
use crate::kinematics::{NodeType, RobotModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GraphKind {
    Human,
    Robot,
}

/// Typed directed graph without features. Every structural link appears as
/// a forward and a backward edge.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphStructure {
    pub kind: GraphKind,
    pub node_types: Vec<NodeType>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

/// Edge and node index lists split by receiving node type.
#[derive(Clone, Debug)]
pub struct TypeIndex {
    /// Edge ids whose destination has this type.
    pub edges: Arc<[usize]>,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    /// Nodes of this type.
    pub nodes: Arc<[usize]>,
}

#[derive(Clone, Debug)]
pub struct IndexSets {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub per_type: [TypeIndex; 2],
}

impl GraphStructure {
    /// Structure with one forward and one backward edge per link.
    pub fn from_links(kind: GraphKind, node_types: Vec<NodeType>, links: &[(usize, usize)]) -> Result<Self> {
        let n = node_types.len();
        let mut src = Vec::with_capacity(2 * links.len());
        let mut dst = Vec::with_capacity(2 * links.len());
        for &(a, b) in links {
            if a == b || a >= n || b >= n {
                return Err(Error::config(format!("invalid link {a}-{b}")));
            }
            src.push(a);
            dst.push(b);
        }
        for &(a, b) in links {
            src.push(b);
            dst.push(a);
        }
        Ok(GraphStructure {
            kind,
            node_types,
            src,
            dst,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    /// Number of structural links (half the directed edges).
    pub fn n_links(&self) -> usize {
        self.src.len() / 2
    }

    /// Disjoint union of `copies` instances, instance-major.
    pub fn replicate(&self, copies: usize) -> GraphStructure {
        let n = self.n_nodes();
        let mut out = GraphStructure {
            kind: self.kind,
            node_types: Vec::with_capacity(n * copies),
            src: Vec::with_capacity(self.n_edges() * copies),
            dst: Vec::with_capacity(self.n_edges() * copies),
        };
        for c in 0..copies {
            out.node_types.extend_from_slice(&self.node_types);
            out.src.extend(self.src.iter().map(|s| s + c * n));
            out.dst.extend(self.dst.iter().map(|d| d + c * n));
        }
        out
    }

    pub fn index_sets(&self) -> IndexSets {
        let make = |t: NodeType| {
            let edges: Vec<usize> = (0..self.n_edges())
                .filter(|&e| self.node_types[self.dst[e]] == t)
                .collect();
            TypeIndex {
                src: edges.iter().map(|&e| self.src[e]).collect(),
                dst: edges.iter().map(|&e| self.dst[e]).collect(),
                edges: edges.into(),
                nodes: (0..self.n_nodes())
                    .filter(|&i| self.node_types[i] == t)
                    .collect(),
            }
        };
        IndexSets {
            n_nodes: self.n_nodes(),
            n_edges: self.n_edges(),
            per_type: [make(NodeType::Arm), make(NodeType::Hand)],
        }
    }

    /// Same graph with node `i` renamed `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> GraphStructure {
        let mut node_types = self.node_types.clone();
        for (i, &p) in perm.iter().enumerate() {
            node_types[p] = self.node_types[i];
        }
        GraphStructure {
            kind: self.kind,
            node_types,
            src: self.src.iter().map(|&s| perm[s]).collect(),
            dst: self.dst.iter().map(|&d| perm[d]).collect(),
        }
    }
}

/// A graph with node features (`N x C1`) and edge features (`E x C2`).
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonGraph {
    pub structure: GraphStructure,
    pub nodes: Tensor,
    pub edges: Tensor,
}

impl SkeletonGraph {
    pub fn new(structure: GraphStructure, nodes: Tensor, edges: Tensor) -> Result<Self> {
        if nodes.rows() != structure.n_nodes() || edges.rows() != structure.n_edges() {
            return Err(Error::config("feature rows do not match the graph"));
        }
        Ok(SkeletonGraph {
            structure,
            nodes,
            edges,
        })
    }
}

/// Human structure on the demonstration keypoints.
pub fn human_structure() -> GraphStructure {
    GraphStructure::from_links(GraphKind::Human, HumanSkeleton::keypoint_types(), &HumanSkeleton::links())
        .expect("canonical skeleton links are valid")
}

/// Human node features (positions) and edge features (position of the
/// receiver minus position of the sender) for one frame.
pub fn human_features(structure: &GraphStructure, frame: &DemoFrame) -> Result<(Tensor, Tensor)> {
    if frame.positions.len() != structure.n_nodes() {
        return Err(Error::usage(format!(
            "frame has {} keypoints, graph expects {}",
            frame.positions.len(),
            structure.n_nodes()
        )));
    }
    let p = &frame.positions;
    let nodes = Tensor::from_fn(p.len(), 3, |r, c| p[r][c]);
    let edges = Tensor::from_fn(structure.n_edges(), 3, |e, c| {
        p[structure.dst[e]][c] - p[structure.src[e]][c]
    });
    Ok((nodes, edges))
}

pub fn human_graph(frame: &DemoFrame) -> Result<SkeletonGraph> {
    let s = human_structure();
    let (nodes, edges) = human_features(&s, frame)?;
    SkeletonGraph::new(s, nodes, edges)
}

/// Robot links: each joint to its parent, plus one link between the first
/// two base-attached joints so the arms exchange messages.
pub fn robot_links(model: &RobotModel) -> Vec<(usize, usize)> {
    let mut links: Vec<(usize, usize)> = model
        .joints
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.parent.map(|p| (p, i)))
        .collect();
    let roots: Vec<usize> = (0..model.dof())
        .filter(|&i| model.joints[i].parent.is_none())
        .collect();
    if roots.len() >= 2 {
        links.insert(0, (roots[0], roots[1]));
    }
    links
}

/// Robot structure and its constant edge features: `[offset, rpy]` of the
/// child joint on forward edges, `[-offset, rpy]` on backward edges. The
/// root link carries the difference of the two root origins.
pub fn robot_structure(model: &RobotModel) -> Result<(GraphStructure, Tensor)> {
    let links = robot_links(model);
    let s = GraphStructure::from_links(
        GraphKind::Robot,
        model.joints.iter().map(|j| j.node_type).collect(),
        &links,
    )?;
    let feature = |(a, b): (usize, usize)| -> [f64; 6] {
        let jb = &model.joints[b];
        if jb.parent == Some(a) {
            let o = jb.origin_offset;
            let r = jb.origin_rpy;
            [o.x, o.y, o.z, r.x, r.y, r.z]
        } else {
            let o = jb.origin_offset - model.joints[a].origin_offset;
            [o.x, o.y, o.z, 0.0, 0.0, 0.0]
        }
    };
    let l = links.len();
    let edges = Tensor::from_fn(2 * l, 6, |e, c| {
        let f = feature(links[e % l]);
        if e >= l && c < 3 {
            -f[c]
        } else {
            f[c]
        }
    });
    Ok((s, edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::bundled_model;

    #[test]
    fn links_give_paired_edges_without_self_loops() {
        let m = bundled_model("arm7x2_hand").unwrap();
        let (s, e) = robot_structure(&m).unwrap();
        assert_eq!(s.n_edges(), 2 * s.n_links());
        assert!(s.src.iter().zip(&s.dst).all(|(a, b)| a != b));
        let l = s.n_links();
        for k in 0..l {
            assert_eq!((s.src[k], s.dst[k]), (s.dst[k + l], s.src[k + l]));
            for c in 0..3 {
                assert_eq!(e.get(k, c), -e.get(k + l, c));
                assert_eq!(e.get(k, c + 3), e.get(k + l, c + 3));
            }
        }
        let h = human_structure();
        assert_eq!(h.n_nodes(), 26);
        assert_eq!(h.n_edges(), 50);
    }
}
