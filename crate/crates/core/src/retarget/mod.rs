//! Training the encoder/decoder pair, and retargeting frames by searching
//! the decoder's latent space with the decoder frozen.

mod adam;
mod experiments;
mod infer;
mod train;

pub use adam::{clip_global_norm, Adam};
pub use experiments::*;
pub use infer::{
    baseline_joint_optimize, frame_seed, gaussian_latent, latent_statistics, parallel_map, random_init, replay_stopping,
    Init, LatentOptions, Mode, OptimRun, Retargeter, StopReason,
};
pub use train::{batch_gradient, train, TrainOptions, TrainReport};
