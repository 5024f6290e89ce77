//! Confidence-weighted fusion of the per-camera probe estimates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{slerp, Pose};
use crate::servo::ServoResult;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FusionError {
    #[error("no converged camera estimate")]
    NoEstimate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedPose {
    pub pose: Pose,
    pub contributors: Vec<Side>,
    /// `(w_l, w_r)`; zero for a camera that did not contribute.
    pub weights: (f64, f64),
}

/// Probe pose and confidence of one camera, already in the common frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedPose {
    pub pose: Pose,
    pub weight: f64,
}

impl From<&ServoResult> for WeightedPose {
    fn from(r: &ServoResult) -> Self {
        Self {
            pose: r.pose,
            weight: r.weight,
        }
    }
}

/// Fuses the sessions of both cameras. Sessions that did not converge count
/// as absent.
pub fn fuse(
    left: Option<&ServoResult>,
    right: Option<&ServoResult>,
) -> Result<FusedPose, FusionError> {
    let usable = |r: Option<&ServoResult>| r.filter(|r| r.converged).map(WeightedPose::from);
    fuse_weighted(usable(left), usable(right))
}

/// Weighted translation average plus Slerp toward the right rotation with
/// parameter `w_r / (w_l + w_r)`.
pub fn fuse_weighted(
    left: Option<WeightedPose>,
    right: Option<WeightedPose>,
) -> Result<FusedPose, FusionError> {
    let valid = |p: Option<WeightedPose>| p.filter(|p| p.weight > 0.0 && p.weight.is_finite());
    match (valid(left), valid(right)) {
        (Some(l), Some(r)) => {
            let sum = l.weight + r.weight;
            let t = (l.pose.translation * l.weight + r.pose.translation * r.weight) / sum;
            let q = slerp(&l.pose.rotation, &r.pose.rotation, r.weight / sum);
            Ok(FusedPose {
                pose: Pose::new(q, t),
                contributors: vec![Side::Left, Side::Right],
                weights: (l.weight, r.weight),
            })
        }
        (Some(l), None) => Ok(FusedPose {
            pose: l.pose,
            contributors: vec![Side::Left],
            weights: (l.weight, 0.0),
        }),
        (None, Some(r)) => Ok(FusedPose {
            pose: r.pose,
            contributors: vec![Side::Right],
            weights: (0.0, r.weight),
        }),
        (None, None) => Err(FusionError::NoEstimate),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use crate::pose_error::FeatureError;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn wp(t: [f64; 3], rpy: [f64; 3], weight: f64) -> WeightedPose {
        WeightedPose {
            pose: Pose::new(Rotation::from_rpy(rpy[0], rpy[1], rpy[2]), Vector3::from(t)),
            weight,
        }
    }

    fn result(p: WeightedPose, converged: bool) -> ServoResult {
        ServoResult {
            pose: p.pose,
            camera_pose: p.pose,
            weight: p.weight,
            iterations: 3,
            converged,
            residual: FeatureError::zero(),
            trace: vec![],
        }
    }

    #[test]
    fn equal_weights_give_midpoint() {
        let l = wp([0.0; 3], [0.0, 0.0, 0.0], 0.7);
        let r = wp([0.002, 0.0, 0.0], [0.0, 0.0, 0.4], 0.7);
        let f = fuse_weighted(Some(l), Some(r)).unwrap();
        assert_abs_diff_eq!(f.pose.translation, Vector3::new(0.001, 0.0, 0.0), epsilon = 1e-12);
        let mid = Rotation::from_rpy(0.0, 0.0, 0.2);
        assert!(f.pose.rotation.angle_to(&mid) < 1e-12);
        assert_eq!(f.contributors, vec![Side::Left, Side::Right]);
    }

    #[test]
    fn unequal_weights() {
        let l = wp([0.0; 3], [0.0; 3], 0.8);
        let r = wp([0.010, 0.0, 0.0], [0.0; 3], 0.2);
        let f = fuse_weighted(Some(l), Some(r)).unwrap();
        assert_abs_diff_eq!(f.pose.translation, Vector3::new(0.002, 0.0, 0.0), epsilon = 1e-12);
        assert_eq!(f.weights, (0.8, 0.2));
    }

    #[test]
    fn single_camera_is_passed_through() {
        let l = wp([0.01, -0.02, 0.08], [0.1, 0.2, 0.3], 0.4);
        let f = fuse(Some(&result(l, true)), None).unwrap();
        assert_eq!(f.pose, l.pose);
        assert_eq!(f.contributors, vec![Side::Left]);
        let f = fuse(None, Some(&result(l, true))).unwrap();
        assert_eq!(f.pose, l.pose);
        assert_eq!(f.contributors, vec![Side::Right]);
    }

    #[test]
    fn unconverged_sessions_are_ignored() {
        let l = wp([0.0; 3], [0.0; 3], 0.9);
        let r = wp([0.01, 0.0, 0.0], [0.0; 3], 0.9);
        let f = fuse(Some(&result(l, true)), Some(&result(r, false))).unwrap();
        assert_eq!(f.pose, l.pose);
        assert_eq!(
            fuse(Some(&result(l, false)), Some(&result(r, false))),
            Err(FusionError::NoEstimate)
        );
        assert_eq!(fuse(None, None), Err(FusionError::NoEstimate));
    }

    #[test]
    fn vanishing_weight_tends_to_other_pose() {
        let l = wp([0.01, 0.02, 0.08], [0.3, -0.2, 1.0], 0.6);
        let r = wp([-0.03, 0.01, 0.09], [-0.4, 0.1, 2.5], 1e-12);
        let f = fuse_weighted(Some(l), Some(r)).unwrap();
        assert!((f.pose.translation - l.pose.translation).norm() < 1e-9);
        assert!(f.pose.rotation.angle_to(&l.pose.rotation) < 1e-9);
    }

    #[test]
    fn opposite_hemisphere_quaternions() {
        // same rotation family with quaternions of opposite sign
        let a = Rotation::from_rpy(0.0, 0.0, 3.0);
        let b = Rotation::from_rpy(0.0, 0.0, -3.0);
        assert!(a.dot(&b) < 0.0);
        let l = WeightedPose { pose: Pose::new(a, Vector3::zeros()), weight: 1.0 };
        let r = WeightedPose { pose: Pose::new(b, Vector3::zeros()), weight: 1.0 };
        let f = fuse_weighted(Some(l), Some(r)).unwrap();
        // the short way round passes through yaw = pi
        assert!(f.pose.rotation.angle_to(&Rotation::from_rpy(0.0, 0.0, std::f64::consts::PI)) < 1e-9);
    }

    fn arb_pose() -> impl Strategy<Value = WeightedPose> {
        (
            prop::array::uniform3(-0.1..0.1f64),
            prop::array::uniform3(-3.0..3.0f64),
            0.01..1.0f64,
        )
            .prop_map(|(t, r, w)| wp(t, r, w))
    }

    proptest! {
        #[test]
        fn fused_pose_lies_between_inputs(l in arb_pose(), r in arb_pose()) {
            let f = fuse_weighted(Some(l), Some(r)).unwrap();
            let seg = r.pose.translation - l.pose.translation;
            let s = (f.pose.translation - l.pose.translation).dot(&seg) / seg.norm_squared();
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&s));
            let on_line = l.pose.translation + seg * s;
            prop_assert!((on_line - f.pose.translation).norm() < 1e-12);
            let total = l.pose.rotation.angle_to(&r.pose.rotation);
            let a = l.pose.rotation.angle_to(&f.pose.rotation);
            let b = f.pose.rotation.angle_to(&r.pose.rotation);
            prop_assert!((a + b - total).abs() < 1e-7, "{a} + {b} != {total}");
        }

        #[test]
        fn swapping_sides_is_symmetric(l in arb_pose(), r in arb_pose()) {
            let a = fuse_weighted(Some(l), Some(r)).unwrap();
            let b = fuse_weighted(Some(r), Some(l)).unwrap();
            prop_assert!((a.pose.translation - b.pose.translation).norm() < 1e-12);
            prop_assert!(a.pose.rotation.angle_to(&b.pose.rotation) < 1e-7);
        }
    }
}
