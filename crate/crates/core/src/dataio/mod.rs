//! Demonstration data: the human skeleton, the `.demo` format and the
//! synthetic motion generator.

mod demo;
pub mod format;
mod skeleton;
mod synth;

pub use demo::{DemoFrame, DemoSequence, MAX_STEP, ROTATION_TOLERANCE};
pub use format::{load_demo, parse_demo, save_demo, to_demo_string};
pub use skeleton::{HumanSkeleton, FINGERS, HUMAN_DOF_PER_SIDE, SIDES};
pub use synth::{
    make_dataset, synth_angles, synth_demo, synth_demo_with, Dataset, DatasetOptions, MotionPlan, Sinusoid,
    SynthOptions, SynthStyle, DEFAULT_DT, TEST_SEED_OFFSET,
};

pub use crate::kinematics::format::{load_robot, save_robot};
