//! The `.robot` description format.
//!
//! A TOML document with a versioned header and four array-of-table
//! sections. Lengths are meters, angles radians.
//!
//! ```toml
//! format = "robot"
//! version = 1
//! name = "toy"
//! d_min = 0.02            # optional, collision threshold
//!
//! [[joint]]
//! name = "l_j1"
//! parent = ""             # empty or absent: attached to the base frame
//! offset = [0.0, 0.15, 0.0]
//! rpy = [0.0, 0.0, 0.0]   # optional, Rz(yaw) * Ry(pitch) * Rx(roll)
//! axis = [0.0, 1.0, 0.0]
//! limits = [-3.0, 1.0]
//! type = "arm"            # arm | hand, default arm
//!
//! [[marker]]
//! name = "l_wrist"
//! joint = "l_j6"
//! offset = [0.0, 0.0, 0.0]
//!
//! [[capsule]]
//! a = "l_j1"              # joint origin or marker name
//! b = "l_j4"
//! radius = 0.04
//!
//! [[chain]]
//! side = "l"
//! shoulder = "l_shoulder"
//! elbow = "l_elbow"
//! wrist = "l_wrist"
//! end_effector = "l_ee"
//! [[chain.finger]]
//! name = "index"
//! meta = "l_index_meta"
//! tip = "l_index_tip"
//! ```
//!
//! Joints must appear after their parents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{CapsuleSpec, Chain, Finger, JointSpec, Marker, NodeType, RobotModel, Site, DEFAULT_D_MIN};
use super::Vec3;
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "robot";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotFile {
    format: String,
    version: u32,
    name: String,
    #[serde(default)]
    d_min: Option<f64>,
    #[serde(default)]
    joint: Vec<JointEntry>,
    #[serde(default)]
    marker: Vec<MarkerEntry>,
    #[serde(default)]
    capsule: Vec<CapsuleEntry>,
    #[serde(default)]
    chain: Vec<ChainEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointEntry {
    name: String,
    #[serde(default)]
    parent: String,
    offset: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
    axis: [f64; 3],
    limits: Option<[f64; 2]>,
    #[serde(rename = "type", default = "default_type")]
    node_type: NodeType,
}

fn default_type() -> NodeType {
    NodeType::Arm
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkerEntry {
    name: String,
    joint: String,
    offset: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapsuleEntry {
    a: String,
    b: String,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainEntry {
    side: String,
    shoulder: String,
    elbow: String,
    wrist: String,
    end_effector: String,
    #[serde(default)]
    finger: Vec<FingerEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FingerEntry {
    name: String,
    meta: String,
    tip: String,
}

/// Line (1-based) of the `index`-th occurrence of a `[[section]]` header.
fn section_line(src: &str, section: &str, index: usize) -> usize {
    let header = format!("[[{section}]]");
    src.lines()
        .enumerate()
        .filter(|(_, l)| l.trim() == header)
        .nth(index)
        .map(|(n, _)| n + 1)
        .unwrap_or(0)
}

struct Ctx<'a> {
    src: &'a str,
    path: &'a Path,
}

impl Ctx<'_> {
    fn err(&self, section: &str, index: usize, field: &str, message: String) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: section_line(self.src, section, index),
            field: format!("{section}.{field}"),
            message,
        }
    }
}

/// Parse a robot description. `path` is used in error messages only.
pub fn parse_robot(src: &str, path: &Path) -> Result<RobotModel> {
    let file: RobotFile = toml::from_str(src).map_err(|e| {
        let line = e
            .span()
            .map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            path: path.to_path_buf(),
            line,
            field: String::new(),
            message: e.message().to_string(),
        }
    })?;
    let ctx = Ctx { src, path };
    if file.format != FORMAT_TAG {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            field: "format".into(),
            message: format!("expected `{FORMAT_TAG}`, found `{}`", file.format),
        });
    }
    if file.version != FORMAT_VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            field: "version".into(),
            message: format!("unsupported version {}", file.version),
        });
    }

    let mut joints: Vec<JointSpec> = Vec::with_capacity(file.joint.len());
    for (i, j) in file.joint.iter().enumerate() {
        let parent = if j.parent.is_empty() {
            None
        } else {
            let p = joints.iter().position(|x| x.name == j.parent).ok_or_else(|| {
                ctx.err(
                    "joint",
                    i,
                    "parent",
                    format!("joint `{}`: parent `{}` is not defined above it", j.name, j.parent),
                )
            })?;
            Some(p)
        };
        let [lower, upper] = j.limits.ok_or_else(|| {
            ctx.err("joint", i, "limits", format!("joint `{}` has no `limits`", j.name))
        })?;
        joints.push(JointSpec {
            name: j.name.clone(),
            parent,
            origin_offset: Vec3::from(j.offset),
            origin_rpy: Vec3::from(j.rpy),
            axis: Vec3::from(j.axis),
            lower,
            upper,
            node_type: j.node_type,
        });
    }
    let joint_of = |name: &str| joints.iter().position(|j| j.name == name);

    let mut markers = Vec::with_capacity(file.marker.len());
    for (i, m) in file.marker.iter().enumerate() {
        let joint = joint_of(&m.joint).ok_or_else(|| {
            ctx.err(
                "marker",
                i,
                "joint",
                format!("marker `{}`: unknown joint `{}`", m.name, m.joint),
            )
        })?;
        markers.push(Marker {
            name: m.name.clone(),
            joint,
            offset: Vec3::from(m.offset),
            rpy: Vec3::from(m.rpy),
        });
    }
    let marker_of = |name: &str| markers.iter().position(|m: &Marker| m.name == name);
    let site = |name: &str| -> Option<Site> {
        if let Some(m) = marker_of(name) {
            let mk = &markers[m];
            return Some(Site {
                name: name.to_string(),
                joint: mk.joint,
                offset: mk.offset,
            });
        }
        joint_of(name).map(|j| Site {
            name: name.to_string(),
            joint: j,
            offset: Vec3::zeros(),
        })
    };

    let mut capsules = Vec::with_capacity(file.capsule.len());
    for (i, c) in file.capsule.iter().enumerate() {
        let resolve = |field: &str, name: &str| {
            site(name).ok_or_else(|| {
                ctx.err("capsule", i, field, format!("unknown joint or marker `{name}`"))
            })
        };
        capsules.push(CapsuleSpec {
            a: resolve("a", &c.a)?,
            b: resolve("b", &c.b)?,
            radius: c.radius,
        });
    }

    let mut chains = Vec::with_capacity(file.chain.len());
    for (i, c) in file.chain.iter().enumerate() {
        let resolve = |field: &str, name: &str| {
            marker_of(name).ok_or_else(|| {
                ctx.err("chain", i, field, format!("chain `{}`: unknown marker `{name}`", c.side))
            })
        };
        let mut fingers = Vec::with_capacity(c.finger.len());
        for f in &c.finger {
            fingers.push(Finger {
                name: f.name.clone(),
                meta: resolve("finger.meta", &f.meta)?,
                tip: resolve("finger.tip", &f.tip)?,
            });
        }
        chains.push(Chain {
            side: c.side.clone(),
            shoulder: resolve("shoulder", &c.shoulder)?,
            elbow: resolve("elbow", &c.elbow)?,
            wrist: resolve("wrist", &c.wrist)?,
            end_effector: resolve("end_effector", &c.end_effector)?,
            fingers,
        });
    }

    RobotModel::new(
        file.name,
        joints,
        markers,
        capsules,
        chains,
        file.d_min.unwrap_or(DEFAULT_D_MIN),
    )
}

/// Serialize a model. `parse_robot(&to_robot_string(m))` reproduces `m`.
pub fn to_robot_string(model: &RobotModel) -> Result<String> {
    let v = |x: &Vec3| [x.x, x.y, x.z];
    let file = RobotFile {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        name: model.name.clone(),
        d_min: Some(model.d_min),
        joint: model
            .joints
            .iter()
            .map(|j| JointEntry {
                name: j.name.clone(),
                parent: j
                    .parent
                    .map(|p| model.joints[p].name.clone())
                    .unwrap_or_default(),
                offset: v(&j.origin_offset),
                rpy: v(&j.origin_rpy),
                axis: v(&j.axis),
                limits: Some([j.lower, j.upper]),
                node_type: j.node_type,
            })
            .collect(),
        marker: model
            .markers
            .iter()
            .map(|m| MarkerEntry {
                name: m.name.clone(),
                joint: model.joints[m.joint].name.clone(),
                offset: v(&m.offset),
                rpy: v(&m.rpy),
            })
            .collect(),
        capsule: model
            .capsules
            .iter()
            .map(|c| CapsuleEntry {
                a: c.a.name.clone(),
                b: c.b.name.clone(),
                radius: c.radius,
            })
            .collect(),
        chain: model
            .chains
            .iter()
            .map(|c| {
                let n = |i: usize| model.markers[i].name.clone();
                ChainEntry {
                    side: c.side.clone(),
                    shoulder: n(c.shoulder),
                    elbow: n(c.elbow),
                    wrist: n(c.wrist),
                    end_effector: n(c.end_effector),
                    finger: c
                        .fingers
                        .iter()
                        .map(|f| FingerEntry {
                            name: f.name.clone(),
                            meta: n(f.meta),
                            tip: n(f.tip),
                        })
                        .collect(),
                }
            })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::config(format!("serializing robot: {e}")))
}

pub fn load_robot(path: impl AsRef<Path>) -> Result<RobotModel> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_robot(&src, path)
}

pub fn save_robot(model: &RobotModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_robot_string(model)?).map_err(|e| Error::io(PathBuf::from(path), e))
}
