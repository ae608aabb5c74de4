//! Skeleton graphs, the residual typed graph convolution, and the
//! encoder/decoder pair that maps demonstrations to latent codes and latent
//! codes to joint angles that always respect the robot's limits.

mod checkpoint;
mod graph;
mod layers;
mod nets;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, CHECKPOINT_TAG, CHECKPOINT_VERSION};
pub use graph::{
    human_features, human_graph, human_structure, robot_links, robot_structure, GraphKind, GraphStructure, IndexSets,
    SkeletonGraph, TypeIndex,
};
pub use layers::{fan_in_uniform, GraphConvLayer, Linear, Params};
pub use nets::{Architecture, Bound, NetConfig, Networks};
