//! Seeded property suites for the geometric, metric and learning invariants.

mod common;

use common::*;
use neural_retarget::dataio::{SynthOptions, SynthStyle};
use neural_retarget::kinematics::{bundled_model, Capsule, RobotModel, Vec3};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn models() -> Vec<RobotModel> {
    ["arm7x2_hand", "arm5x2"].iter().map(|n| bundled_model(n).unwrap()).collect()
}

fn seeded(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]),
    )
}

fn check(r: Check) -> Result<(), TestCaseError> {
    r.map_err(TestCaseError::fail)
}

fn point(range: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-range..range).prop_map(|a| Vec3::new(a[0], a[1], a[2]))
}

/// Multiples of 1/8 in [-4, 4]: sums and differences stay exact.
fn dyadic_point() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-32i32..=32).prop_map(|a| Vec3::new(a[0] as f64 / 8.0, a[1] as f64 / 8.0, a[2] as f64 / 8.0))
}

fn capsule() -> impl Strategy<Value = Capsule> {
    (point(1.0), point(1.0), 0.0..0.2).prop_map(|(a, b, radius)| Capsule { a, b, radius })
}

#[test]
fn fk_rotations_are_orthonormal() {
    let ms = models();
    seeded(10_000)
        .run(&(0usize..2, any::<u64>()), |(m, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = angles_in_limits(&ms[m], &mut rng);
            check(fk_orthonormal(&ms[m], &a))
        })
        .unwrap();
}

#[test]
fn fk_composes_over_subtrees() {
    let ms = models();
    seeded(500)
        .run(&(0usize..2, any::<u64>(), any::<prop::sample::Index>()), |(m, seed, root)| {
            let model = &ms[m];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = angles_in_limits(model, &mut rng);
            check(fk_subtree_composition(model, root.index(model.dof()), &a))
        })
        .unwrap();
}

#[test]
fn capsule_distance_is_symmetric() {
    seeded(2000)
        .run(&(capsule(), capsule()), |(a, b)| check(capsule_symmetric(&a, &b)))
        .unwrap();
}

#[test]
fn frechet_symmetry_and_bounds() {
    let track = || prop::collection::vec(point(2.0), 1..12);
    seeded(1000)
        .run(&(track(), track()), |(a, b)| check(frechet_bounds(&a, &b)))
        .unwrap();
}

#[test]
fn frechet_translation_is_exact() {
    let track = || prop::collection::vec(dyadic_point(), 1..10);
    seeded(1000)
        .run(&(track(), track(), dyadic_point()), |(a, b, d)| {
            check(frechet_translation(&a, &b, &d))
        })
        .unwrap();
}

#[test]
fn losses_vanish_exactly_at_a_match() {
    let ms = models();
    seeded(300)
        .run(&(0usize..2, any::<u64>()), |(m, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = angles_in_limits(&ms[m], &mut rng);
            let b = angles_in_limits(&ms[m], &mut rng);
            check(loss_zero_iff_match(&ms[m], &a, &b))
        })
        .unwrap();
}

#[test]
fn normalized_losses_ignore_demonstrator_scale() {
    let ms = models();
    seeded(300)
        .run(&(0usize..2, any::<u64>(), 0.3f64..3.0), |(m, seed, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = angles_in_limits(&ms[m], &mut rng);
            let demo = neural_retarget::dataio::synth_demo(seed, 1, 1.0 / 30.0, &Default::default(), 1.0)
                .unwrap()
                .frames
                .remove(0);
            check(loss_scale_invariant(&ms[m], &demo, &a, s))
        })
        .unwrap();
}

#[test]
fn graph_convolution_is_permutation_equivariant() {
    let ms = models();
    seeded(200)
        .run(&(0usize..2, any::<u64>()), |(m, seed)| check(graph_conv_equivariant(&ms[m], seed)))
        .unwrap();
}

#[test]
fn generated_motion_respects_the_step_bound() {
    seeded(300)
        .run(
            &(any::<u64>(), 0.0f64..=1.0, prop::bool::ANY, 0.005f64..0.1),
            |(seed, difficulty, crossing, dt)| {
                let style = if crossing { SynthStyle::Crossing } else { SynthStyle::Signing };
                check(generator_smooth(&SynthOptions {
                    seed,
                    n_frames: 60,
                    dt,
                    difficulty,
                    style,
                }))
            },
        )
        .unwrap();
}

#[test]
fn backward_is_linear_and_deterministic() {
    seeded(500)
        .run(
            &(prop::collection::vec(-2.0f64..2.0, 1..8), -3.0f64..3.0, -3.0f64..3.0),
            |(x, a, b)| check(backward_linear(&x, a, b)),
        )
        .unwrap();
}
