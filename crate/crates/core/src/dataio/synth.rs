use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::demo::{DemoFrame, DemoSequence};
use super::skeleton::{HumanSkeleton, HUMAN_DOF_PER_SIDE};
use crate::error::{Error, Result};

pub const DEFAULT_DT: f64 = 1.0 / 30.0;

/// Amplitude scale at difficulty 1, radians.
pub const BASE_AMPLITUDE: f64 = 0.6;

/// Mean posture of a generated motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthStyle {
    /// Forearms raised in front of the chest, hands apart.
    Signing,
    /// Forearms folded across each other in front of the chest.
    Crossing,
}

impl SynthStyle {
    pub fn name(self) -> &'static str {
        match self {
            SynthStyle::Signing => "signing",
            SynthStyle::Crossing => "crossing",
        }
    }

    /// Left-side mean angles in human joint order.
    fn left_mean(self) -> [f64; HUMAN_DOF_PER_SIDE] {
        match self {
            //                  sh_z  sh_y   sh_x  elbow  wr_z wr_y wr_x  fingers
            SynthStyle::Signing => [0.0, -0.5, 0.25, -1.3, 0.0, 0.0, 0.0, -0.5, -0.5, -0.5, -0.5, -0.5],
            SynthStyle::Crossing => [0.9, -0.6, -0.05, -1.6, 0.0, 0.0, 0.0, -0.5, -0.5, -0.5, -0.5, -0.5],
        }
    }
}

impl std::str::FromStr for SynthStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signing" => Ok(SynthStyle::Signing),
            "crossing" => Ok(SynthStyle::Crossing),
            _ => Err(Error::config(format!("unknown motion style `{s}`"))),
        }
    }
}

/// Axes of the human side block; x and z rotations flip sign under the
/// left/right mirror.
const MIRROR_SIGN: [f64; HUMAN_DOF_PER_SIDE] = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

/// Per-joint `mean + sum_k a_k sin(2 pi t / T_k + phi_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionPlan {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<Sinusoid>>,
}

impl MotionPlan {
    /// 3 to 6 components per joint, periods in [1, 4] s, amplitudes
    /// `A T_k / (4 n)` with `A = BASE_AMPLITUDE * difficulty`, so every
    /// joint rate is at most `A pi / 2`.
    pub fn sample(seed: u64, difficulty: f64, style: SynthStyle) -> MotionPlan {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = BASE_AMPLITUDE * difficulty.max(0.0);
        let left = style.left_mean();
        let mut mean = Vec::with_capacity(2 * HUMAN_DOF_PER_SIDE);
        mean.extend_from_slice(&left);
        mean.extend(left.iter().zip(MIRROR_SIGN).map(|(m, s)| m * s));
        let components = (0..mean.len())
            .map(|_| {
                let n = rng.gen_range(3..=6);
                (0..n)
                    .map(|_| {
                        let period = rng.gen_range(1.0..=4.0);
                        Sinusoid {
                            amplitude: a * period / (4.0 * n as f64),
                            period,
                            phase: rng.gen_range(0.0..2.0 * PI),
                        }
                    })
                    .collect()
            })
            .collect();
        MotionPlan { mean, components }
    }

    pub fn angles(&self, t: f64) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.components)
            .map(|(m, cs)| {
                m + cs
                    .iter()
                    .map(|c| c.amplitude * (2.0 * PI * t / c.period + c.phase).sin())
                    .sum::<f64>()
            })
            .collect()
    }

    /// Upper bound on `|theta(t + dt) - theta(t)|` per joint.
    pub fn step_bound(&self, dt: f64) -> Vec<f64> {
        self.components
            .iter()
            .map(|cs| cs.iter().map(|c| c.amplitude * 2.0 * PI * dt / c.period).sum())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub seed: u64,
    pub n_frames: usize,
    pub dt: f64,
    pub difficulty: f64,
    pub style: SynthStyle,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            seed: 0,
            n_frames: 100,
            dt: DEFAULT_DT,
            difficulty: 1.0,
            style: SynthStyle::Signing,
        }
    }
}

/// Human joint angles of a generated motion, one vector per frame.
pub fn synth_angles(opts: &SynthOptions) -> Vec<Vec<f64>> {
    let plan = MotionPlan::sample(opts.seed, opts.difficulty, opts.style);
    (0..opts.n_frames)
        .map(|i| plan.angles(i as f64 * opts.dt))
        .collect()
}

/// Smooth synthetic demonstration on `skeleton`.
pub fn synth_demo(seed: u64, n_frames: usize, dt: f64, skeleton: &HumanSkeleton, difficulty: f64) -> Result<DemoSequence> {
    synth_demo_with(
        &SynthOptions {
            seed,
            n_frames,
            dt,
            difficulty,
            style: SynthStyle::Signing,
        },
        skeleton,
    )
}

pub fn synth_demo_with(opts: &SynthOptions, skeleton: &HumanSkeleton) -> Result<DemoSequence> {
    if opts.n_frames == 0 {
        return Err(Error::usage("n_frames must be at least 1"));
    }
    if !(opts.dt > 0.0) {
        return Err(Error::usage("dt must be positive"));
    }
    let human = skeleton.model()?;
    let frames = synth_angles(opts)
        .iter()
        .map(|a| DemoFrame::from_pose(&human, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(DemoSequence {
        label: format!("{}-{}", opts.style.name(), opts.seed),
        dt: opts.dt,
        skeleton: skeleton.clone(),
        frames,
    })
}

/// Split sizes and generator settings for [`make_dataset`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOptions {
    pub train: usize,
    pub test: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub dt: f64,
    pub difficulty: f64,
    pub style: SynthStyle,
    /// Train seeds are `seed..seed + train`, test seeds start at
    /// `seed + TEST_SEED_OFFSET`.
    pub seed: u64,
}

pub const TEST_SEED_OFFSET: u64 = 1 << 32;

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            train: 61,
            test: 25,
            min_frames: 100,
            max_frames: 250,
            dt: DEFAULT_DT,
            difficulty: 1.0,
            style: SynthStyle::Signing,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<DemoSequence>,
    pub test: Vec<DemoSequence>,
}

/// Generate train and test sequences from disjoint seed ranges.
pub fn make_dataset(opts: &DatasetOptions, skeleton: &HumanSkeleton) -> Result<Dataset> {
    if opts.min_frames == 0 || opts.min_frames > opts.max_frames {
        return Err(Error::config("frame range must satisfy 1 <= min_frames <= max_frames"));
    }
    let make = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f4a3);
        let n_frames = rng.gen_range(opts.min_frames..=opts.max_frames);
        synth_demo_with(
            &SynthOptions {
                seed,
                n_frames,
                dt: opts.dt,
                difficulty: opts.difficulty,
                style: opts.style,
            },
            skeleton,
        )
    };
    let train = (0..opts.train as u64)
        .map(|i| make(opts.seed + i))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..opts.test as u64)
        .map(|i| make(opts.seed + TEST_SEED_OFFSET + i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { train, test })
}
