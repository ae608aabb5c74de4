use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use crate::autodiff::{Tape, Tensor};
use crate::dataio::{DemoFrame, DemoSequence};
use crate::error::{Error, Result};
use crate::graphnet::Networks;
use crate::kinematics::RobotModel;
use crate::objective::{joint_limit_loss, objective_on_tape, Correspondence, LossBreakdown, ObjectiveWeights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentOptions {
    pub max_iters: usize,
    /// Consecutive non-improving iterations that end a run.
    pub plateau: usize,
    pub lr: f64,
}

impl Default for LatentOptions {
    fn default() -> Self {
        LatentOptions {
            max_iters: 100,
            plateau: 5,
            lr: 1e-2,
        }
    }
}

impl LatentOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.plateau == 0 {
            return Err(Error::config("optimizer max_iters and plateau must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("optimizer lr must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    Plateau,
    /// No iterations were run.
    Feedforward,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxIters => "max_iters",
            StopReason::Plateau => "plateau",
            StopReason::Feedforward => "feedforward",
        }
    }
}

/// One optimization run. `losses[k]` is the objective at iterate `k`, with
/// `losses[0]` at the starting point.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimRun {
    pub losses: Vec<LossBreakdown>,
    pub best_iteration: usize,
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    /// Best iterate: a latent code, or raw angles for the baseline.
    pub z: Tensor,
    pub angles: Vec<f64>,
}

impl OptimRun {
    pub fn totals(&self) -> Vec<f64> {
        self.losses.iter().map(|l| l.total).collect()
    }

    pub fn initial(&self) -> &LossBreakdown {
        &self.losses[0]
    }

    pub fn best(&self) -> &LossBreakdown {
        &self.losses[self.best_iteration]
    }

    /// Best total seen up to and including iteration `k`, holding the final
    /// best after the run stopped.
    pub fn best_so_far(&self, k: usize) -> f64 {
        self.losses[..=k.min(self.losses.len() - 1)]
            .iter()
            .map(|l| l.total)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Re-derive where the stopping rule ends a run from its logged totals.
/// Returns `None` if the log continues past that point or ends early.
pub fn replay_stopping(totals: &[f64], opts: &LatentOptions) -> Option<(usize, StopReason)> {
    let mut best = *totals.first()?;
    let mut stall = 0;
    for (k, &t) in totals.iter().enumerate().skip(1) {
        if t < best {
            best = t;
            stall = 0;
        } else {
            stall += 1;
        }
        let stop = if stall >= opts.plateau {
            Some(StopReason::Plateau)
        } else if k == opts.max_iters {
            Some(StopReason::MaxIters)
        } else {
            None
        };
        if let Some(r) = stop {
            return (k + 1 == totals.len()).then_some((k, r));
        }
    }
    None
}

/// Gradient descent on one vector with the plateau rule, keeping the best
/// iterate. `eval` returns the loss breakdown, gradient and decoded angles.
fn descend(
    x0: Tensor,
    opts: &LatentOptions,
    mut eval: impl FnMut(&Tensor) -> Result<(LossBreakdown, Tensor, Vec<f64>)>,
) -> Result<OptimRun> {
    opts.validate()?;
    let (l0, mut grad, a0) = eval(&x0)?;
    if !l0.total.is_finite() {
        return Err(Error::NonFinite {
            frame: 0,
            detail: format!("objective {} at the starting point", l0.total),
        });
    }
    let mut x = vec![x0.clone()];
    let mut adam = Adam::new(opts.lr, &x);
    let mut run = OptimRun {
        losses: vec![l0],
        best_iteration: 0,
        iterations_used: 0,
        stop_reason: StopReason::MaxIters,
        z: x0,
        angles: a0,
    };
    let mut stall = 0;
    for k in 1..=opts.max_iters {
        adam.update(&mut x, &[grad])?;
        let (l, g, a) = eval(&x[0])?;
        if !l.total.is_finite() || !g.all_finite() {
            return Err(Error::NonFinite {
                frame: 0,
                detail: format!("objective {} at iteration {k}", l.total),
            });
        }
        grad = g;
        run.losses.push(l);
        run.iterations_used = k;
        if l.total < run.best().total {
            run.best_iteration = k;
            run.z = x[0].clone();
            run.angles = a;
            stall = 0;
        } else {
            stall += 1;
        }
        if stall >= opts.plateau {
            run.stop_reason = StopReason::Plateau;
            break;
        }
    }
    Ok(run)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Decode the initial latent without iterating.
    Feedforward,
    LatentOpt,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feedforward" => Ok(Mode::Feedforward),
            "latent_opt" => Ok(Mode::LatentOpt),
            _ => Err(Error::config(format!("unknown mode `{s}` (feedforward|latent_opt)"))),
        }
    }
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Feedforward => "feedforward",
            Mode::LatentOpt => "latent_opt",
        }
    }
}

/// Source of the starting latent code.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Init {
    /// The trained encoder's output.
    Neural,
    /// I.i.d. `N(mean, std^2)` entries.
    Gaussian { mean: f64, std: f64 },
}

impl Init {
    pub fn standard() -> Self {
        Init::Gaussian { mean: 0.0, std: 1.0 }
    }
}

/// `rows x cols` i.i.d. `N(0, sigma^2)` draws.
pub fn random_init(rows: usize, cols: usize, sigma: f64, seed: u64) -> Tensor {
    gaussian_latent(rows, cols, 0.0, sigma, seed)
}

pub fn gaussian_latent(rows: usize, cols: usize, mean: f64, std: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(rows, cols, |_, _| {
        let n: f64 = StandardNormal.sample(&mut rng);
        mean + std * n
    })
}

/// Pooled mean and standard deviation of every encoder output entry.
pub fn latent_statistics(nets: &Networks, frames: &[DemoFrame]) -> Result<(f64, f64)> {
    if frames.is_empty() {
        return Err(Error::usage("latent statistics of an empty set"));
    }
    let (mut sum, mut sq, mut n) = (0.0, 0.0, 0usize);
    for chunk in frames.chunks(16) {
        let mut tape = Tape::new();
        let pv = nets.encoder_params.register(&mut tape, false);
        let refs: Vec<&DemoFrame> = chunk.iter().collect();
        let z = nets.encode_on_tape(&mut tape, &pv, &refs)?;
        for &v in tape.value(z).as_slice() {
            sum += v;
            sq += v * v;
            n += 1;
        }
    }
    let mean = sum / n as f64;
    Ok((mean, (sq / n as f64 - mean * mean).max(0.0).sqrt()))
}

/// Decorrelated per-frame seed.
pub fn frame_seed(seed: u64, frame: usize) -> u64 {
    let mut x = seed ^ (frame as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Frozen networks plus everything needed to retarget frames onto a robot.
#[derive(Clone, Debug)]
pub struct Retargeter<'a> {
    pub nets: &'a Networks,
    pub model: &'a RobotModel,
    pub corr: Correspondence,
    pub weights: ObjectiveWeights,
    pub opts: LatentOptions,
}

impl<'a> Retargeter<'a> {
    pub fn new(nets: &'a Networks, model: &'a RobotModel, weights: ObjectiveWeights, opts: LatentOptions) -> Result<Self> {
        weights.validate()?;
        opts.validate()?;
        if nets.dof() != model.dof() {
            return Err(Error::usage(format!(
                "networks decode {} joints but the robot has {}",
                nets.dof(),
                model.dof()
            )));
        }
        Ok(Retargeter {
            nets,
            model,
            corr: Correspondence::new(model)?,
            weights,
            opts,
        })
    }

    /// Objective with prior at `z`, its gradient and the decoded angles.
    pub fn latent_objective(&self, demo: &DemoFrame, z: &Tensor) -> Result<(LossBreakdown, Tensor, Vec<f64>)> {
        let mut tape = Tape::new();
        let pv = self.nets.decoder_params.register(&mut tape, false);
        let zv = tape.leaf(z.clone());
        let a = self.nets.decode_on_tape(&mut tape, &pv, zv, 1)?;
        let l = objective_on_tape(&mut tape, self.model, &self.corr, demo, a, Some(zv), &self.weights)?;
        tape.backward(l.total)?;
        Ok((l.breakdown(&tape), tape.grad(zv), tape.value(a).as_slice().to_vec()))
    }

    pub fn initial_latent(&self, demo: &DemoFrame, init: Init, seed: u64) -> Result<Tensor> {
        let (r, c) = self.nets.latent_shape();
        match init {
            Init::Neural => self.nets.encode(demo),
            Init::Gaussian { mean, std } => Ok(gaussian_latent(r, c, mean, std, seed)),
        }
    }

    /// Search the latent space from `z0` with the decoder frozen.
    pub fn latent_optimize(&self, demo: &DemoFrame, z0: Tensor) -> Result<OptimRun> {
        descend(z0, &self.opts, |z| self.latent_objective(demo, z))
    }

    pub fn feedforward(&self, demo: &DemoFrame, z0: Tensor) -> Result<OptimRun> {
        let (l, _, angles) = self.latent_objective(demo, &z0)?;
        if !l.total.is_finite() {
            return Err(Error::NonFinite {
                frame: 0,
                detail: format!("objective {} at the decoded latent", l.total),
            });
        }
        Ok(OptimRun {
            losses: vec![l],
            best_iteration: 0,
            iterations_used: 0,
            stop_reason: StopReason::Feedforward,
            z: z0,
            angles,
        })
    }

    pub fn retarget_frame(&self, demo: &DemoFrame, mode: Mode, init: Init, seed: u64) -> Result<OptimRun> {
        let z0 = self.initial_latent(demo, init, seed)?;
        self.run_from(demo, mode, z0)
    }

    fn run_from(&self, demo: &DemoFrame, mode: Mode, z0: Tensor) -> Result<OptimRun> {
        match mode {
            Mode::Feedforward => self.feedforward(demo, z0),
            Mode::LatentOpt => self.latent_optimize(demo, z0),
        }
    }

    /// Retarget every frame independently; frame `t` uses
    /// `frame_seed(seed, t)`. With `warm_start`, frame `t > 0` starts from
    /// frame `t - 1`'s result instead. `jobs > 1` spreads frames over
    /// threads when not warm starting; results keep frame order.
    pub fn retarget_sequence(
        &self,
        seq: &DemoSequence,
        mode: Mode,
        init: Init,
        seed: u64,
        warm_start: bool,
        jobs: usize,
    ) -> Result<Vec<OptimRun>> {
        let tag = |t: usize, e: Error| match e {
            Error::NonFinite { detail, .. } => Error::NonFinite { frame: t, detail },
            e => e,
        };
        if warm_start {
            let mut out: Vec<OptimRun> = Vec::with_capacity(seq.len());
            for (t, f) in seq.frames.iter().enumerate() {
                let z0 = match out.last() {
                    Some(prev) => prev.z.clone(),
                    None => self.initial_latent(f, init, frame_seed(seed, t))?,
                };
                out.push(self.run_from(f, mode, z0).map_err(|e| tag(t, e))?);
            }
            return Ok(out);
        }
        let one = |t: usize| {
            self.retarget_frame(&seq.frames[t], mode, init, frame_seed(seed, t))
                .map_err(|e| tag(t, e))
        };
        parallel_map(seq.len(), jobs, one)
    }
}

/// `(0..n).map(f)` over up to `jobs` threads, in index order.
pub fn parallel_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..jobs)
            .map(|j| s.spawn(move || (j..n).step_by(jobs).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every index computed")).collect()
}

/// Adam directly on joint angles against the objective plus the soft limit
/// penalty `w.lim * L_lim`. Angles are not clamped; `total` includes the
/// penalty and `reg` is zero.
pub fn baseline_joint_optimize(
    model: &RobotModel,
    demo: &DemoFrame,
    angles0: &[f64],
    w: &ObjectiveWeights,
    opts: &LatentOptions,
) -> Result<OptimRun> {
    w.validate()?;
    if angles0.len() != model.dof() {
        return Err(Error::usage(format!("expected {} initial angles", model.dof())));
    }
    let corr = Correspondence::new(model)?;
    let (lo, hi) = (model.lower_limits(), model.upper_limits());
    descend(Tensor::column(angles0), opts, |x| {
        let mut tape = Tape::new();
        let a = tape.leaf(x.clone());
        let l = objective_on_tape(&mut tape, model, &corr, demo, a, None, w)?;
        let lim = joint_limit_loss(&mut tape, a, &lo, &hi);
        let lim = tape.scale(lim, w.lim);
        let total = tape.add(l.total, lim);
        tape.backward(total)?;
        let mut b = l.breakdown(&tape);
        b.total = tape.item(total);
        Ok((b, tape.grad(a), x.as_slice().to_vec()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_demo, HumanSkeleton};
    use crate::graphnet::NetConfig;
    use crate::kinematics::bundled_model;
    use crate::objective::demo_from_robot_pose;

    fn setup() -> (RobotModel, Networks, DemoSequence) {
        let m = bundled_model("arm5x2").unwrap();
        let n = Networks::new(&m, NetConfig::default(), 2).unwrap();
        let d = synth_demo(4, 3, 0.1, &HumanSkeleton::default(), 1.0).unwrap();
        (m, n, d)
    }

    #[test]
    fn prior_only_objective_shrinks_latent() {
        let (m, n, d) = setup();
        let r = Retargeter::new(&n, &m, ObjectiveWeights::prior_only(), LatentOptions::default()).unwrap();
        let z0 = random_init(n.latent_shape().0, n.latent_shape().1, 1.0, 5);
        let run = r.latent_optimize(&d.frames[0], z0.clone()).unwrap();
        assert!(run.z.squared_norm() < z0.squared_norm());
        assert!(run.best().total <= run.initial().total);
    }

    #[test]
    fn runs_obey_bounds_and_replay() {
        let (m, n, d) = setup();
        let opts = LatentOptions {
            max_iters: 30,
            ..LatentOptions::default()
        };
        let r = Retargeter::new(&n, &m, ObjectiveWeights::default(), opts.clone()).unwrap();
        let runs = r
            .retarget_sequence(&d, Mode::LatentOpt, Init::standard(), 1, false, 2)
            .unwrap();
        for run in &runs {
            assert!((1..=30).contains(&run.iterations_used));
            assert_eq!(run.losses.len(), run.iterations_used + 1);
            assert!(run.best().total <= run.initial().total);
            assert_eq!(replay_stopping(&run.totals(), &opts), Some((run.iterations_used, run.stop_reason)));
            assert!(m.within_limits(&run.angles));
        }
        let serial = r
            .retarget_sequence(&d, Mode::LatentOpt, Init::standard(), 1, false, 1)
            .unwrap();
        assert_eq!(runs, serial);
        let ff = r.retarget_frame(&d.frames[0], Mode::Feedforward, Init::Neural, 0).unwrap();
        assert_eq!(ff.iterations_used, 0);
        let one = DemoSequence {
            frames: vec![d.frames[0].clone()],
            ..d.clone()
        };
        let seq = r.retarget_sequence(&one, Mode::Feedforward, Init::Neural, 0, false, 1).unwrap();
        assert_eq!(seq[0], ff);
        let empty = DemoSequence { frames: vec![], ..d };
        assert!(r.retarget_sequence(&empty, Mode::LatentOpt, Init::Neural, 0, false, 1).unwrap().is_empty());
    }

    #[test]
    fn replay_rejects_inconsistent_logs() {
        let opts = LatentOptions {
            max_iters: 10,
            plateau: 2,
            lr: 0.1,
        };
        assert_eq!(replay_stopping(&[3.0, 2.0, 2.5, 2.0], &opts), Some((3, StopReason::Plateau)));
        assert_eq!(replay_stopping(&[3.0, 2.0, 2.5, 2.0, 1.0], &opts), None);
        assert_eq!(replay_stopping(&[3.0, 2.0], &opts), None);
    }

    #[test]
    fn gaussian_init_statistics() {
        let z = random_init(1000, 100, 0.5, 3);
        let n = z.len() as f64;
        let mean = z.as_slice().iter().sum::<f64>() / n;
        let std = (z.squared_norm() / n - mean * mean).sqrt();
        assert!(mean.abs() < 0.005);
        assert!((std - 0.5).abs() < 0.005);
        assert_eq!(random_init(3, 4, 0.5, 3), random_init(3, 4, 0.5, 3));
        assert!(random_init(3, 4, 0.0, 3).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn baseline_stays_at_a_feasible_optimum() {
        let (m, _, d) = setup();
        let q: Vec<f64> = m.lower_limits().iter().zip(m.upper_limits()).map(|(l, u)| 0.3 * l + 0.7 * u).collect();
        let demo = demo_from_robot_pose(&m, &q, &d.frames[0]).unwrap();
        let w = ObjectiveWeights {
            col: 0.0,
            ..ObjectiveWeights::default()
        };
        let run = baseline_joint_optimize(&m, &demo, &q, &w, &LatentOptions::default()).unwrap();
        assert!(run.best().total < 1e-12);
        assert!(m.within_limits(&run.angles));
        let again = baseline_joint_optimize(&m, &demo, &q, &w, &LatentOptions::default()).unwrap();
        assert_eq!(run, again);
    }
}
