use super::Vec3;
use crate::autodiff::{Tape, Var};

/// Segment `a..b` swept by a sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

const EPS: f64 = 1e-12;

/// Parameters `(s, t)` of the closest points `p1 + s (q1 - p1)` and
/// `p2 + t (q2 - p2)`, both in `[0, 1]`.
///
/// Parallel segments take the midpoint of the overlap of segment 2's
/// projection onto segment 1, or the nearer endpoint when they do not overlap.
pub fn closest_parameters(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> (f64, f64) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    if a <= EPS && e <= EPS {
        return (0.0, 0.0);
    }
    if a <= EPS {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.dot(&r);
    if e <= EPS {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    if denom <= 1e-12 * a * e {
        let u0 = (p2 - p1).dot(&d1) / a;
        let u1 = (q2 - p1).dot(&d1) / a;
        let (lo, hi) = (u0.min(u1).max(0.0), u0.max(u1).min(1.0));
        let s = if lo <= hi {
            0.5 * (lo + hi)
        } else if u0.max(u1) < 0.0 {
            0.0
        } else {
            1.0
        };
        let t = ((p1 + d1 * s - p2).dot(&d2) / e).clamp(0.0, 1.0);
        return (s, t);
    }
    let mut s = ((b * f - c * e) / denom).clamp(0.0, 1.0);
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

/// Distance between two segments.
pub fn segment_distance(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> f64 {
    let (s, t) = closest_parameters(p1, q1, p2, q2);
    ((p1 + (q1 - p1) * s) - (p2 + (q2 - p2) * t)).norm()
}

/// Surface distance; negative when the capsules interpenetrate.
pub fn capsule_distance(a: &Capsule, b: &Capsule) -> f64 {
    segment_distance(&a.a, &a.b, &b.a, &b.b) - a.radius - b.radius
}

/// Surface distance between capsules whose endpoints are `3 x 1` tape nodes.
///
/// The closest-point parameters are held fixed at their current values; at a
/// unique minimiser this gives the exact gradient of the distance.
pub fn tape_capsule_distance(
    tape: &mut Tape,
    a: (Var, Var),
    b: (Var, Var),
    radii: f64,
) -> Var {
    let v = |tape: &Tape, x: Var| super::tensor_vec3(tape.value(x));
    let (p1, q1, p2, q2) = (v(tape, a.0), v(tape, a.1), v(tape, b.0), v(tape, b.1));
    let (s, t) = closest_parameters(&p1, &q1, &p2, &q2);
    let da = tape.sub(a.1, a.0);
    let db = tape.sub(b.1, b.0);
    let sa = tape.scale(da, s);
    let tb = tape.scale(db, t);
    let pa = tape.add(a.0, sa);
    let pb = tape.add(b.0, tb);
    let diff = tape.sub(pa, pb);
    let sq = tape.square(diff);
    let ss = tape.sum(sq);
    let dist = tape.sqrt(ss);
    let r = tape.constant(crate::autodiff::Tensor::scalar(radii));
    tape.sub(dist, r)
}
