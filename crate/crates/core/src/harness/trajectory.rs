use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};

use super::HarnessError;
use crate::geometry::{Pose, Rotation, StampedPose};

/// Straight-segment length and arc radius of the U-shaped path, meters.
pub const U_SEGMENT: f64 = 0.100;
pub const U_RADIUS: f64 = 0.100;
pub const U_HEIGHT: f64 = 0.080;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    UShape,
    Spiral,
    Custom,
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrajectoryKind::UShape => "u_shape",
            TrajectoryKind::Spiral => "spiral",
            TrajectoryKind::Custom => "custom",
        })
    }
}

impl FromStr for TrajectoryKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "u_shape" => Ok(TrajectoryKind::UShape),
            "spiral" => Ok(TrajectoryKind::Spiral),
            "custom" => Ok(TrajectoryKind::Custom),
            other => Err(HarnessError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub waypoints: Vec<StampedPose>,
}

impl Trajectory {
    /// A custom trajectory from pose records.
    pub fn from_records(waypoints: Vec<StampedPose>) -> Result<Self, HarnessError> {
        if waypoints.len() < 2 {
            return Err(HarnessError::InvalidTrajectory(format!(
                "need >= 2 waypoints, got {}",
                waypoints.len()
            )));
        }
        if waypoints.windows(2).any(|w| !(w[1].stamp > w[0].stamp)) {
            return Err(HarnessError::InvalidTrajectory(
                "stamps must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            kind: TrajectoryKind::Custom,
            waypoints,
        })
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Sum of straight-line distances between consecutive waypoints.
    pub fn polyline_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1].pose.translation - w[0].pose.translation).norm())
            .sum()
    }
}

/// Probe orientation with `z` pointing down onto the plane and `y` along the
/// horizontal direction of travel.
pub fn probe_orientation(tangent: &Vector3<f64>) -> Rotation {
    let y = Vector3::new(tangent.x, tangent.y, 0.0).normalize();
    let z = -Vector3::z();
    let x = y.cross(&z);
    Rotation::from_matrix(&Matrix3::from_columns(&[x, y, z]))
}

/// Point and tangent on the U-shape at arc length `s`: up the left leg,
/// over the semicircle, down the right leg, centered on the origin.
fn u_shape_at(s: f64) -> (Vector3<f64>, Vector3<f64>) {
    let (l, r) = (U_SEGMENT, U_RADIUS);
    let arc = PI * r;
    // legs span y ∈ [-l, 0]; the arc bulges to y = r
    let y_shift = 0.5 * (l - r);
    if s <= l {
        (
            Vector3::new(-r, -l + s + y_shift, U_HEIGHT),
            Vector3::y(),
        )
    } else if s <= l + arc {
        let phi = PI - (s - l) / r;
        (
            Vector3::new(r * phi.cos(), r * phi.sin() + y_shift, U_HEIGHT),
            Vector3::new(phi.sin(), -phi.cos(), 0.0),
        )
    } else {
        let u = s - l - arc;
        (Vector3::new(r, -u + y_shift, U_HEIGHT), -Vector3::y())
    }
}

pub fn u_shape_length() -> f64 {
    2.0 * U_SEGMENT + PI * U_RADIUS
}

/// Point and tangent on the 3/4-turn spiral at parameter `u ∈ [0, 1]`.
fn spiral_at(u: f64) -> (Vector3<f64>, Vector3<f64>) {
    let phi = 1.5 * PI * u;
    let r = 0.100 - 0.030 * u;
    let z = 0.070 + 0.030 * u;
    let p = Vector3::new(r * phi.cos(), r * phi.sin(), z);
    // d/du of the horizontal position
    let dr = -0.030;
    let dphi = 1.5 * PI;
    let t = Vector3::new(
        dr * phi.cos() - r * dphi * phi.sin(),
        dr * phi.sin() + r * dphi * phi.cos(),
        0.0,
    );
    (p, t)
}

/// Samples a trajectory with unit time steps.
pub fn generate_trajectory(kind: TrajectoryKind, samples: usize) -> Result<Trajectory, HarnessError> {
    if samples < 2 {
        return Err(HarnessError::InvalidTrajectory(format!(
            "need >= 2 samples, got {samples}"
        )));
    }
    let step = 1.0 / (samples - 1) as f64;
    let point = |i: usize| -> (Vector3<f64>, Vector3<f64>) {
        let u = i as f64 * step;
        match kind {
            TrajectoryKind::UShape => u_shape_at(u * u_shape_length()),
            _ => spiral_at(u),
        }
    };
    match kind {
        TrajectoryKind::UShape | TrajectoryKind::Spiral => {}
        TrajectoryKind::Custom => {
            return Err(HarnessError::UnknownKind(
                "custom trajectories are read from a pose file".into(),
            ))
        }
    }
    let waypoints = (0..samples)
        .map(|i| {
            let (p, t) = point(i);
            StampedPose {
                stamp: i as f64,
                pose: Pose::new(probe_orientation(&t), p),
            }
        })
        .collect();
    Ok(Trajectory { kind, waypoints })
}
