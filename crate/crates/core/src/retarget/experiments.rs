use serde::{Deserialize, Serialize};

use super::infer::{frame_seed, parallel_map, Init, Mode, OptimRun, Retargeter};
use crate::dataio::{DemoFrame, DemoSequence};
use crate::error::{Error, Result};
use crate::metrics::evaluate_motion;
use crate::objective::colliding_pairs;

/// The four starting points compared in the initialization experiment:
/// the encoder, `N(0, 0.1)`, `N(0, 0.2)` and `N(mean, std^2)` with the
/// training set's latent statistics. Variances, not deviations.
pub fn init_variants(train_mean: f64, train_std: f64) -> Vec<(String, Init)> {
    vec![
        ("neural".into(), Init::Neural),
        ("gauss_var0.1".into(), Init::Gaussian { mean: 0.0, std: 0.1f64.sqrt() }),
        ("gauss_var0.2".into(), Init::Gaussian { mean: 0.0, std: 0.2f64.sqrt() }),
        ("gauss_train".into(), Init::Gaussian { mean: train_mean, std: train_std }),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitCurve {
    pub label: String,
    /// Mean over frames of the best total seen by iteration `k`.
    pub mean_best: Vec<f64>,
    pub mean_iterations: f64,
    pub mean_best_iteration: f64,
}

/// How quickly the neural start matches one random start's best loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reach {
    pub label: String,
    /// Mean first iteration at which the neural run's best-so-far is at or
    /// below the random run's best; `max_iters + 1` when never.
    pub neural: f64,
    /// Mean iteration at which the random run found its own best.
    pub random: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitComparison {
    pub curves: Vec<InitCurve>,
    pub reach: Vec<Reach>,
}

impl InitComparison {
    pub fn curve(&self, label: &str) -> Option<&InitCurve> {
        self.curves.iter().find(|c| c.label == label)
    }
}

/// Latent optimization from each start on every frame. Frame `f` under
/// start `i` uses `frame_seed(frame_seed(seed, i), f)`.
pub fn compare_init(
    rt: &Retargeter,
    frames: &[&DemoFrame],
    inits: &[(String, Init)],
    seed: u64,
    jobs: usize,
) -> Result<InitComparison> {
    if frames.is_empty() {
        return Err(Error::usage("no frames to compare on"));
    }
    let max = rt.opts.max_iters;
    let mut runs: Vec<Vec<OptimRun>> = Vec::with_capacity(inits.len());
    for (i, (_, init)) in inits.iter().enumerate() {
        let s = frame_seed(seed, i);
        runs.push(parallel_map(frames.len(), jobs, |f| {
            rt.retarget_frame(frames[f], Mode::LatentOpt, *init, frame_seed(s, f))
        })?);
    }
    let n = frames.len() as f64;
    let curves = inits
        .iter()
        .zip(&runs)
        .map(|((label, _), rs)| InitCurve {
            label: label.clone(),
            mean_best: (0..=max).map(|k| rs.iter().map(|r| r.best_so_far(k)).sum::<f64>() / n).collect(),
            mean_iterations: rs.iter().map(|r| r.iterations_used as f64).sum::<f64>() / n,
            mean_best_iteration: rs.iter().map(|r| r.best_iteration as f64).sum::<f64>() / n,
        })
        .collect();
    let mut reach = Vec::new();
    if let Some(ni) = inits.iter().position(|(_, i)| *i == Init::Neural) {
        for (k, (label, init)) in inits.iter().enumerate() {
            if *init == Init::Neural {
                continue;
            }
            let (mut a, mut b) = (0.0, 0.0);
            for (nr, rr) in runs[ni].iter().zip(&runs[k]) {
                let target = rr.best().total;
                a += (0..=max).find(|&j| nr.best_so_far(j) <= target).unwrap_or(max + 1) as f64;
                b += rr.best_iteration as f64;
            }
            reach.push(Reach {
                label: label.clone(),
                neural: a / n,
                random: b / n,
            });
        }
    }
    Ok(InitComparison { curves, reach })
}

/// Evaluation of one retargeted motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionReport {
    pub label: String,
    pub frames: usize,
    pub frechet: f64,
    pub velocity: f64,
    pub acceleration: f64,
    /// Capsule pairs closer than `d_min`, summed over frames.
    pub collisions: usize,
    pub limit_violations: usize,
    pub mean_initial: f64,
    pub mean_final: f64,
    pub mean_iterations: f64,
}

pub fn motion_report(rt: &Retargeter, seq: &DemoSequence, runs: &[OptimRun]) -> Result<MotionReport> {
    let angles: Vec<Vec<f64>> = runs.iter().map(|r| r.angles.clone()).collect();
    let m = evaluate_motion(seq, &angles, rt.model)?;
    let mut collisions = 0;
    let mut violations = 0;
    for a in &angles {
        collisions += colliding_pairs(rt.model, a)?.len();
        violations += rt.model.limit_violations(a);
    }
    let n = runs.len().max(1) as f64;
    Ok(MotionReport {
        label: seq.label.clone(),
        frames: runs.len(),
        frechet: m.frechet,
        velocity: m.velocity,
        acceleration: m.acceleration,
        collisions,
        limit_violations: violations,
        mean_initial: runs.iter().map(|r| r.initial().total).sum::<f64>() / n,
        mean_final: runs.iter().map(|r| r.best().total).sum::<f64>() / n,
        mean_iterations: runs.iter().map(|r| r.iterations_used as f64).sum::<f64>() / n,
    })
}

/// Retarget and evaluate several motions; motion `i` uses
/// `frame_seed(seed, i)` as its sequence seed.
pub fn evaluate_motions(
    rt: &Retargeter,
    seqs: &[DemoSequence],
    mode: Mode,
    init: Init,
    seed: u64,
    jobs: usize,
) -> Result<Vec<(MotionReport, Vec<OptimRun>)>> {
    parallel_map(seqs.len(), jobs, |i| {
        let runs = rt.retarget_sequence(&seqs[i], mode, init, frame_seed(seed, i), false, 1)?;
        Ok((motion_report(rt, &seqs[i], &runs)?, runs))
    })
}

/// Mean of a report field over motions.
pub fn mean_of(reports: &[MotionReport], f: impl Fn(&MotionReport) -> f64) -> f64 {
    reports.iter().map(f).sum::<f64>() / reports.len().max(1) as f64
}
