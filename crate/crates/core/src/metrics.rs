//! Trajectory similarity: discrete Frechet distance and finite-difference
//! velocity and acceleration errors over the wrists and elbows.

use crate::dataio::DemoSequence;
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, marker_positions, RobotModel, Vec3};

/// Sampled 3-D trajectory, `dt` seconds per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Vec3>,
    pub dt: f64,
}

/// Discrete Frechet distance by the coupling recurrence
/// `c(i, j) = max(d(i, j), min(c(i-1, j), c(i, j-1), c(i-1, j-1)))`.
pub fn discrete_frechet(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::usage("Frechet distance of an empty trajectory"));
    }
    let n = b.len();
    let mut prev = vec![0.0; n];
    let mut cur = vec![0.0; n];
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            let d = (p - q).norm();
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => d.max(cur[j - 1]),
                (_, 0) => d.max(prev[0]),
                _ => d.max(prev[j].min(cur[j - 1]).min(prev[j - 1])),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[n - 1])
}

/// Paired demo and robot trajectories for the four tracked markers
/// (left wrist, right wrist, left elbow, right elbow).
#[derive(Clone, Debug, PartialEq)]
pub struct MarkerTracks {
    pub names: Vec<String>,
    /// Demo positions multiplied by the robot/demo shoulder-to-wrist ratio.
    pub demo: Vec<Vec<Vec3>>,
    pub robot: Vec<Vec<Vec3>>,
    pub dt: f64,
}

/// Robot marker positions for a joint trajectory.
pub fn robot_marker_tracks(model: &RobotModel, angles: &[Vec<f64>]) -> Result<Vec<Vec<Vec3>>> {
    angles
        .iter()
        .map(|a| forward_kinematics(model, a).map(|fk| marker_positions(model, &fk)))
        .collect()
}

pub fn marker_tracks(demo: &DemoSequence, angles: &[Vec<f64>], model: &RobotModel) -> Result<MarkerTracks> {
    if demo.len() != angles.len() {
        return Err(Error::usage(format!(
            "demo has {} frames but the trajectory has {}",
            demo.len(),
            angles.len()
        )));
    }
    let keypoints = crate::dataio::HumanSkeleton::keypoints();
    let robot_frames = robot_marker_tracks(model, angles)?;
    let mut tracks = MarkerTracks {
        names: Vec::new(),
        demo: Vec::new(),
        robot: Vec::new(),
        dt: demo.dt,
    };
    for part in ["wrist", "elbow"] {
        for (side_i, side) in crate::dataio::SIDES.iter().enumerate() {
            let (chain, norms) = model
                .chain(side)
                .ok_or_else(|| Error::usage(format!("robot has no `{side}` chain")))?;
            let marker = if part == "wrist" { chain.wrist } else { chain.elbow };
            let name = format!("{side}_{part}");
            let kp = keypoints.iter().position(|k| *k == name).expect("keypoint");
            tracks.robot.push(robot_frames.iter().map(|f| f[marker]).collect());
            tracks.demo.push(
                demo.frames
                    .iter()
                    .map(|f| f.positions[kp] * (norms.arm / f.lengths[side_i].arm))
                    .collect(),
            );
            tracks.names.push(name);
        }
    }
    Ok(tracks)
}

/// Mean Frechet distance over the four tracked markers, meters.
pub fn tracking_error(demo: &DemoSequence, angles: &[Vec<f64>], model: &RobotModel) -> Result<f64> {
    let t = marker_tracks(demo, angles, model)?;
    frechet_mean(&t)
}

pub fn frechet_mean(t: &MarkerTracks) -> Result<f64> {
    let mut sum = 0.0;
    for (d, r) in t.demo.iter().zip(&t.robot) {
        sum += discrete_frechet(d, r)?;
    }
    Ok(sum / t.demo.len() as f64)
}

/// Order-`k` finite difference of a track, divided by `dt^k`.
fn difference(track: &[Vec3], order: usize, dt: f64) -> Vec<Vec3> {
    let mut cur = track.to_vec();
    for _ in 0..order {
        cur = cur.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    }
    cur
}

fn difference_error(t: &MarkerTracks, order: usize) -> Result<f64> {
    let n = t.demo.first().map_or(0, |d| d.len());
    if n < order + 1 {
        return Err(Error::usage(format!(
            "need at least {} samples, found {n}",
            order + 1
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (d, r) in t.demo.iter().zip(&t.robot) {
        let dd = difference(d, order, t.dt);
        let rd = difference(r, order, t.dt);
        for (a, b) in dd.iter().zip(&rd) {
            sum += (b - a).norm();
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Mean `|v_robot - v_demo|` over frames and tracked markers, m/s.
pub fn velocity_error(t: &MarkerTracks) -> Result<f64> {
    difference_error(t, 1)
}

/// Mean `|a_robot - a_demo|` over frames and tracked markers, m/s^2.
pub fn acceleration_error(t: &MarkerTracks) -> Result<f64> {
    difference_error(t, 2)
}

/// All three metrics for one motion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionMetrics {
    pub frechet: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

/// Velocity and acceleration errors are `NaN` for sequences too short to
/// difference.
pub fn evaluate_motion(demo: &DemoSequence, angles: &[Vec<f64>], model: &RobotModel) -> Result<MotionMetrics> {
    let t = marker_tracks(demo, angles, model)?;
    Ok(MotionMetrics {
        frechet: frechet_mean(&t)?,
        velocity: velocity_error(&t).unwrap_or(f64::NAN),
        acceleration: acceleration_error(&t).unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn tracks(demo: Vec<Vec3>, robot: Vec<Vec3>) -> MarkerTracks {
        MarkerTracks {
            names: vec!["x".into()],
            demo: vec![demo],
            robot: vec![robot],
            dt: 0.5,
        }
    }

    #[test]
    fn frechet_basics() {
        let a = [v(0.0, 0.0, 0.0)];
        let b = [v(3.0, 4.0, 0.0)];
        assert_eq!(discrete_frechet(&a, &b).unwrap(), 5.0);
        let c = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(2.0, 1.0, 0.0)];
        assert_eq!(discrete_frechet(&c, &c).unwrap(), 0.0);
        assert!(discrete_frechet(&[], &c).is_err());
    }

    #[test]
    fn constant_velocity_against_static() {
        let demo: Vec<Vec3> = (0..5).map(|i| v(0.5 * i as f64, 0.0, 0.0)).collect();
        let robot = vec![v(0.0, 0.0, 0.0); 5];
        let t = tracks(demo, robot);
        assert!((velocity_error(&t).unwrap() - 1.0).abs() < 1e-12);
        assert!(acceleration_error(&t).unwrap().abs() < 1e-12);
        let short = tracks(vec![v(0.0, 0.0, 0.0); 2], vec![v(0.0, 0.0, 0.0); 2]);
        assert!(acceleration_error(&short).is_err());
    }

    #[test]
    fn perfect_tracking_scores_zero() {
        use crate::dataio::{synth_demo, HumanSkeleton};
        let m = crate::kinematics::bundled_model("arm7x2_hand").unwrap();
        let base = synth_demo(2, 6, 0.1, &HumanSkeleton::default(), 1.0).unwrap();
        let angles: Vec<Vec<f64>> = (0..6)
            .map(|t| m.joints.iter().map(|j| j.lower + (j.upper - j.lower) * (0.3 + 0.05 * t as f64)).collect())
            .collect();
        let frames = angles
            .iter()
            .zip(&base.frames)
            .map(|(a, f)| crate::objective::demo_from_robot_pose(&m, a, f).unwrap())
            .collect();
        let seq = DemoSequence { frames, ..base };
        let r = evaluate_motion(&seq, &angles, &m).unwrap();
        assert!(r.frechet < 1e-12 && r.velocity < 1e-9 && r.acceleration < 1e-9, "{r:?}");
    }
}
