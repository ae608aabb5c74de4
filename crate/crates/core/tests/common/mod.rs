//! Invariant checks shared by the property suite and the acceptance run.
//! Each returns `Err` with a description of the first violation.

#![allow(dead_code)]

use neural_retarget::autodiff::{Activation, Tape, Tensor};
use neural_retarget::dataio::{synth_angles, synth_demo, DemoFrame, HumanSkeleton, MotionPlan, SynthOptions};
use neural_retarget::graphnet::{robot_structure, GraphConvLayer, Params};
use neural_retarget::kinematics::{
    capsule_distance, forward_kinematics, marker_positions, Capsule, RobotModel, Vec3,
};
use neural_retarget::metrics::discrete_frechet;
use neural_retarget::objective::{demo_from_robot_pose, evaluate_angles, Correspondence, ObjectiveWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Angles drawn uniformly inside the limits.
pub fn angles_in_limits(model: &RobotModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    model.joints.iter().map(|j| rng.gen_range(j.lower..=j.upper)).collect()
}

pub fn template_frame() -> DemoFrame {
    synth_demo(0, 1, 1.0 / 30.0, &HumanSkeleton::default(), 1.0).unwrap().frames.remove(0)
}

/// Every joint rotation is orthonormal with determinant one.
pub fn fk_orthonormal(model: &RobotModel, angles: &[f64]) -> Check {
    let fk = forward_kinematics(model, angles).map_err(|e| e.to_string())?;
    for (j, r) in fk.rotations.iter().enumerate() {
        let e = (r * r.transpose() - nalgebra::Matrix3::identity()).abs().max();
        ensure(e <= 1e-9 && (r.determinant() - 1.0).abs() <= 1e-9, || {
            format!("joint {j}: |R R^T - I| = {e:e}, det = {}", r.determinant())
        })?;
    }
    Ok(())
}

/// The frames of a subtree equal its root's parent frame composed with the
/// subtree's own forward kinematics.
pub fn fk_subtree_composition(model: &RobotModel, root: usize, angles: &[f64]) -> Check {
    let fk = forward_kinematics(model, angles).map_err(|e| e.to_string())?;
    let sub = model.subtree(root).map_err(|e| e.to_string())?;
    let keep = model.subtree_joints(root);
    let sub_angles: Vec<f64> = keep.iter().map(|&j| angles[j]).collect();
    let sfk = forward_kinematics(&sub, &sub_angles).map_err(|e| e.to_string())?;
    let (pr, pt) = match model.joints[root].parent {
        Some(p) => (fk.rotations[p], fk.translations[p]),
        None => (nalgebra::Matrix3::identity(), Vec3::zeros()),
    };
    for (n, &j) in keep.iter().enumerate() {
        let r = pr * sfk.rotations[n];
        let t = pt + pr * sfk.translations[n];
        let e = (r - fk.rotations[j]).abs().max().max((t - fk.translations[j]).abs().max());
        ensure(e <= 1e-12, || format!("joint {j} differs by {e:e}"))?;
    }
    Ok(())
}

pub fn capsule_symmetric(a: &Capsule, b: &Capsule) -> Check {
    let (x, y) = (capsule_distance(a, b), capsule_distance(b, a));
    ensure((x - y).abs() <= 1e-12, || format!("d(a,b) = {x}, d(b,a) = {y}"))
}

/// Symmetry, identity, endpoint lower bound and the diagonal-coupling upper
/// bound.
pub fn frechet_bounds(a: &[Vec3], b: &[Vec3]) -> Check {
    let f = discrete_frechet(a, b).map_err(|e| e.to_string())?;
    let g = discrete_frechet(b, a).map_err(|e| e.to_string())?;
    ensure(f == g, || format!("asymmetric: {f} vs {g}"))?;
    ensure(discrete_frechet(a, a).unwrap() == 0.0, || "F(A, A) != 0".into())?;
    let lo = (a[0] - b[0]).norm().max((a[a.len() - 1] - b[b.len() - 1]).norm());
    ensure(f >= lo, || format!("{f} below the endpoint bound {lo}"))?;
    // Walk both curves in proportion; any monotone coupling bounds F above.
    let (m, n) = (a.len(), b.len());
    let steps = m.max(n);
    let mut hi: f64 = 0.0;
    for k in 0..steps {
        let i = if steps == 1 { 0 } else { k * (m - 1) / (steps - 1) };
        let j = if steps == 1 { 0 } else { k * (n - 1) / (steps - 1) };
        hi = hi.max((a[i] - b[j]).norm());
    }
    ensure(f <= hi, || format!("{f} above the coupling bound {hi}"))
}

/// Exact equality under a shared translation; callers pass dyadic
/// coordinates so the shifted differences are exact.
pub fn frechet_translation(a: &[Vec3], b: &[Vec3], d: &Vec3) -> Check {
    let f = discrete_frechet(a, b).unwrap();
    let sa: Vec<Vec3> = a.iter().map(|p| p + d).collect();
    let sb: Vec<Vec3> = b.iter().map(|p| p + d).collect();
    let g = discrete_frechet(&sa, &sb).unwrap();
    ensure(f == g, || format!("{f} became {g} under translation"))
}

fn kinematic(w: &ObjectiveWeights) -> ObjectiveWeights {
    ObjectiveWeights { col: 0.0, ..*w }
}

/// Every term is non-negative; the kinematic terms vanish at the pose that
/// generated the demo and are positive when a marker moves.
pub fn loss_zero_iff_match(model: &RobotModel, angles: &[f64], other: &[f64]) -> Check {
    let corr = Correspondence::new(model).map_err(|e| e.to_string())?;
    let demo = demo_from_robot_pose(model, angles, &template_frame()).map_err(|e| e.to_string())?;
    let w = kinematic(&ObjectiveWeights::default());
    let at = evaluate_angles(model, &corr, &demo, angles, &w).unwrap();
    let off = evaluate_angles(model, &corr, &demo, other, &w).unwrap();
    for b in [&at, &off] {
        let terms = [b.ee, b.ori, b.elb, b.fin, b.col, b.total];
        ensure(terms.iter().all(|&t| t >= 0.0), || format!("negative term in {b:?}"))?;
    }
    ensure(at.total <= 1e-18, || format!("non-zero at the match: {at:?}"))?;
    let ma = marker_positions(model, &forward_kinematics(model, angles).unwrap());
    let mb = marker_positions(model, &forward_kinematics(model, other).unwrap());
    let moved = ma.iter().zip(&mb).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    if moved > 1e-3 {
        // Any tracked marker that moves changes a position or a direction.
        ensure(off.total > 0.0, || format!("markers moved {moved} but loss is zero"))?;
    }
    Ok(())
}

/// Scaling the demonstrator (positions and lengths) leaves every
/// normalized term unchanged.
pub fn loss_scale_invariant(model: &RobotModel, demo: &DemoFrame, angles: &[f64], s: f64) -> Check {
    let corr = Correspondence::new(model).map_err(|e| e.to_string())?;
    let mut scaled = demo.clone();
    for p in &mut scaled.positions {
        *p *= s;
    }
    for l in &mut scaled.lengths {
        l.arm *= s;
        l.forearm *= s;
        for f in &mut l.fingers {
            *f *= s;
        }
    }
    let w = ObjectiveWeights::default();
    let a = evaluate_angles(model, &corr, demo, angles, &w).unwrap();
    let b = evaluate_angles(model, &corr, &scaled, angles, &w).unwrap();
    for (name, x, y) in [("ee", a.ee, b.ee), ("ori", a.ori, b.ori), ("elb", a.elb, b.elb), ("fin", a.fin, b.fin)] {
        ensure((x - y).abs() <= 1e-9 * (1.0 + x.abs()), || format!("{name}: {x} vs {y} at scale {s}"))?;
    }
    Ok(())
}

/// Relabeling the robot graph's nodes permutes the convolution output.
pub fn graph_conv_equivariant(model: &RobotModel, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s, e) = robot_structure(model).map_err(|e| e.to_string())?;
    let n = s.n_nodes();
    let (cin, cout) = (rng.gen_range(1..6), rng.gen_range(1..6));
    let act = Activation::ALL[rng.gen_range(0..4)];
    let mut p = Params::new();
    let layer = GraphConvLayer::new(&mut p, "l", cin, cout, e.cols(), act, &mut rng);
    let x = Tensor::from_fn(n, cin, |_, _| rng.gen_range(-1.0..1.0));
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let ps = s.permuted(&perm);
    let px = Tensor::from_fn(n, cin, |r, c| {
        let i = perm.iter().position(|&q| q == r).unwrap();
        x.get(i, c)
    });
    let run = |st: &neural_retarget::graphnet::GraphStructure, xv: &Tensor| {
        let mut tape = Tape::new();
        let pv = p.register(&mut tape, false);
        let xv = tape.constant(xv.clone());
        let ev = tape.constant(e.clone());
        let y = layer.forward(&mut tape, &pv, xv, ev, &st.index_sets()).unwrap();
        tape.value(y).clone()
    };
    let (y, py) = (run(&s, &x), run(&ps, &px));
    for i in 0..n {
        for c in 0..cout {
            let d = (y.get(i, c) - py.get(perm[i], c)).abs();
            ensure(d <= 1e-12, || format!("node {i} channel {c} differs by {d:e}"))?;
        }
    }
    Ok(())
}

/// Per-frame joint change stays under the sinusoid derivative bound.
pub fn generator_smooth(opts: &SynthOptions) -> Check {
    let plan = MotionPlan::sample(opts.seed, opts.difficulty, opts.style);
    let bound = plan.step_bound(opts.dt);
    let a = synth_angles(opts);
    for t in 1..a.len() {
        for (j, b) in bound.iter().enumerate() {
            let d = (a[t][j] - a[t - 1][j]).abs();
            ensure(d <= b + 1e-12, || format!("frame {t} joint {j}: step {d} over {b}"))?;
        }
    }
    Ok(())
}

/// `grad(a f + b g) = a grad f + b grad g`, and repeated runs match bitwise.
pub fn backward_linear(x: &[f64], a: f64, b: f64) -> Check {
    let n = x.len();
    let eval = |wa: f64, wb: f64| {
        let mut t = Tape::new();
        let v = t.leaf(Tensor::column(x));
        let m = t.constant(Tensor::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.25 - 0.5));
        let mv = t.matmul(m, v);
        let th = t.tanh(mv);
        let f = t.sum(th);
        let sq = t.square(v);
        let sn = t.sin(v);
        let p = t.mul(sq, sn);
        let g = t.sum(p);
        let fa = t.scale(f, wa);
        let gb = t.scale(g, wb);
        let h = t.add(fa, gb);
        t.backward(h).unwrap();
        t.grad(v).into_vec()
    };
    let gf = eval(1.0, 0.0);
    let gg = eval(0.0, 1.0);
    let gh = eval(a, b);
    for i in 0..n {
        let want = a * gf[i] + b * gg[i];
        ensure((gh[i] - want).abs() <= 1e-10 * (1.0 + want.abs()), || {
            format!("coordinate {i}: {} vs {want}", gh[i])
        })?;
    }
    ensure(eval(a, b) == gh, || "repeated backward differs".into())
}
