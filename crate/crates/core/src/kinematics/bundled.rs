use std::path::Path;

use super::format::parse_robot;
use super::RobotModel;
use crate::error::{Error, Result};

/// Names of the models shipped with the crate.
pub const BUNDLED_MODELS: [&str; 2] = ["arm7x2_hand", "arm5x2"];

const ARM7X2_HAND: &str = include_str!("../../models/arm7x2_hand.robot");
const ARM5X2: &str = include_str!("../../models/arm5x2.robot");

/// A bundled model by name.
pub fn bundled_model(name: &str) -> Result<RobotModel> {
    let src = match name {
        "arm7x2_hand" => ARM7X2_HAND,
        "arm5x2" => ARM5X2,
        _ => return Err(Error::usage(format!("no bundled model `{name}`"))),
    };
    parse_robot(src, Path::new(&format!("models/{name}.robot")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::format::to_robot_string;
    use crate::kinematics::NodeType;

    #[test]
    fn bundled_models_load_and_round_trip() {
        for name in BUNDLED_MODELS {
            let m = bundled_model(name).unwrap();
            let back = parse_robot(&to_robot_string(&m).unwrap(), Path::new("rt")).unwrap();
            assert_eq!(m, back, "{name}");
        }
    }

    #[test]
    fn topology_counts() {
        let y = bundled_model("arm7x2_hand").unwrap();
        let arm = y.joints.iter().filter(|j| j.node_type == NodeType::Arm).count();
        assert_eq!((arm, y.dof() - arm), (14, 12));
        assert!(y.has_hands());
        let n = bundled_model("arm5x2").unwrap();
        assert_eq!(n.dof(), 10);
        assert!(!n.has_hands());
        for m in [&y, &n] {
            // cross-arm pairs always present, adjacent links never
            assert!(m.collision_pairs().contains(&(1, 4)));
            assert!(!m.collision_pairs().contains(&(0, 1)));
            assert!(!m.collision_pairs().contains(&(1, 2)));
        }
        assert!(y.collision_pairs().contains(&(0, 2)));
        let (_, norms) = y.chain("l").unwrap();
        assert!((norms.arm - 0.49).abs() < 1e-12);
        assert!((norms.forearm - 0.24).abs() < 1e-12);
    }
}
