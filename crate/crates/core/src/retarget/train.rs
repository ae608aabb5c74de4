use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_global_norm, Adam};
use crate::autodiff::{Tape, Tensor};
use crate::dataio::DemoFrame;
use crate::error::{Error, Result};
use crate::graphnet::Networks;
use crate::kinematics::RobotModel;
use crate::objective::{objective_on_tape, Correspondence, ObjectiveWeights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient norm cap; `0` disables clipping.
    pub clip: f64,
    /// Stop when the best epoch loss improved by less than `tol` over the
    /// last `window` epochs.
    pub tol: f64,
    pub window: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            batch: 16,
            lr: 1e-4,
            epochs: 200,
            seed: 0,
            clip: 10.0,
            tol: 1e-6,
            window: 10,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("train.batch must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("train.lr must be finite and non-negative"));
        }
        if !(self.clip >= 0.0) || !(self.tol >= 0.0) {
            return Err(Error::config("train.clip and train.tol must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-frame objective (including the prior) over each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub early_exit: bool,
}

/// Mean batch objective and gradients for every encoder then decoder
/// parameter. `ids` are the dataset indices of `frames`, used in errors.
pub fn batch_gradient(
    nets: &Networks,
    model: &RobotModel,
    corr: &Correspondence,
    frames: &[&DemoFrame],
    ids: &[usize],
    w: &ObjectiveWeights,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let enc = nets.encoder_params.register(&mut tape, true);
    let dec = nets.decoder_params.register(&mut tape, true);
    let b = frames.len();
    let z = nets.encode_on_tape(&mut tape, &enc, frames)?;
    let angles = nets.decode_on_tape(&mut tape, &dec, z, b)?;
    let mut totals = Vec::with_capacity(b);
    for (k, frame) in frames.iter().enumerate() {
        let a = nets.frame_angles(&mut tape, angles, k);
        let zk = nets.frame_latent(&mut tape, z, k);
        let l = objective_on_tape(&mut tape, model, corr, frame, a, Some(zk), w)?;
        let v = tape.item(l.total);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                frame: ids[k],
                detail: format!("training objective {v}"),
            });
        }
        totals.push(l.total);
    }
    let mut sum = totals[0];
    for &t in &totals[1..] {
        sum = tape.add(sum, t);
    }
    let mean = tape.scale(sum, 1.0 / b as f64);
    tape.backward(mean)?;
    let grads: Vec<Tensor> = enc.iter().chain(&dec).map(|&v| tape.grad(v)).collect();
    if let Some(g) = grads.iter().position(|g| !g.all_finite()) {
        return Err(Error::NonFinite {
            frame: ids[0],
            detail: format!("gradient of parameter {g} in the batch starting here"),
        });
    }
    Ok((tape.item(mean), grads))
}

/// Jointly fit encoder and decoder by Adam on shuffled mini-batches.
/// `on_epoch` sees each finished epoch and its mean loss.
pub fn train(
    nets: &mut Networks,
    model: &RobotModel,
    frames: &[DemoFrame],
    w: &ObjectiveWeights,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    opts.validate()?;
    w.validate()?;
    if frames.is_empty() {
        return Err(Error::usage("training set is empty"));
    }
    let corr = Correspondence::new(model)?;
    let n_enc = nets.encoder_params.len();
    let mut params: Vec<Tensor> = nets
        .encoder_params
        .tensors()
        .iter()
        .chain(nets.decoder_params.tensors())
        .cloned()
        .collect();
    let mut adam = Adam::new(opts.lr, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut report = TrainReport {
        epoch_losses: Vec::new(),
        steps: 0,
        early_exit: false,
    };
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for ids in order.chunks(opts.batch) {
            let batch: Vec<&DemoFrame> = ids.iter().map(|&i| &frames[i]).collect();
            let (loss, mut grads) = batch_gradient(nets, model, &corr, &batch, ids, w)?;
            sum += loss * ids.len() as f64;
            if opts.clip > 0.0 {
                clip_global_norm(&mut grads, opts.clip);
            }
            adam.update(&mut params, &grads)?;
            nets.set_params(params[..n_enc].to_vec(), params[n_enc..].to_vec())?;
            report.steps += 1;
        }
        let mean = sum / frames.len() as f64;
        report.epoch_losses.push(mean);
        on_epoch(epoch, mean);
        if plateaued(&report.epoch_losses, opts.window, opts.tol) {
            report.early_exit = true;
            break;
        }
    }
    Ok(report)
}

/// True when the best loss before the last `window` epochs beats the best
/// inside it by less than `tol`.
fn plateaued(losses: &[f64], window: usize, tol: f64) -> bool {
    if window == 0 || losses.len() <= window {
        return false;
    }
    let split = losses.len() - window;
    let before = losses[..split].iter().copied().fold(f64::INFINITY, f64::min);
    let after = losses[split..].iter().copied().fold(f64::INFINITY, f64::min);
    before - after < tol
}
