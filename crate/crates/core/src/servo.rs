//! Position-based visual servoing of the simulated camera onto a restored
//! target view.
//!
//! Each iteration renders the simulator at the current camera pose,
//! registers it against the (cached) target features, decomposes the
//! homography into a pose error and, unless that error is already below
//! tolerance, moves the simulated camera by a proportional body-frame step.

use std::io::Write;

use crate::geometry::{integrate_twist, Pose, Twist};
use crate::pose_error::{decompose_homography, FeatureError};
use crate::registration::{
    detect_and_describe, register, DetectorConfig, Feature, RegistrationConfig,
};
use crate::restoration::RestoredView;
use crate::simcam::{render_view, PlaneSpec, RigCamera};

/// Residual weighting of the confidence score (per meter, per radian).
pub const MU_T: f64 = 1000.0;
pub const MU_R: f64 = 50.0;

#[derive(Debug, thiserror::Error)]
pub enum ServoError {
    #[error("session failed at iteration {iteration}: {reason}")]
    SessionFailed { iteration: usize, reason: String },
    #[error("invalid servo config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServoConfig {
    pub lambda_t: f64,
    pub lambda_r: f64,
    /// Meters.
    pub trans_tol: f64,
    /// Radians.
    pub rot_tol: f64,
    pub max_iter: usize,
    /// Seconds per control step.
    pub dt: f64,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            lambda_t: 0.5,
            lambda_r: 0.5,
            trans_tol: 0.2e-3,
            rot_tol: 0.2f64.to_radians(),
            max_iter: 20,
            dt: 1.0,
        }
    }
}

impl ServoConfig {
    pub fn validate(&self) -> Result<(), ServoError> {
        let gain = |g: f64| g > 0.0 && g <= 1.0;
        if !gain(self.lambda_t) || !gain(self.lambda_r) {
            return Err(ServoError::InvalidConfig("gains must lie in (0, 1]".into()));
        }
        if !(self.trans_tol > 0.0 && self.rot_tol > 0.0) {
            return Err(ServoError::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_iter == 0 || !(self.dt > 0.0) {
            return Err(ServoError::InvalidConfig(
                "max_iter must be >= 1 and dt > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn is_converged(&self, e: &FeatureError) -> bool {
        e.trans_norm() < self.trans_tol && e.rot_norm() < self.rot_tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Meters.
    pub trans_err: f64,
    /// Radians.
    pub rot_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServoResult {
    /// Probe pose in the simulator's world frame.
    pub pose: Pose,
    /// Camera pose: the final simulated pose corrected by the final residual.
    pub camera_pose: Pose,
    pub weight: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: FeatureError,
    pub trace: Vec<TraceEntry>,
}

/// Proportional control law `v = (λ_t t, λ_r θu)` in the camera frame.
pub fn control_step(e: &FeatureError, cfg: &ServoConfig) -> Twist {
    Twist::new(e.translation * cfg.lambda_t, e.theta_u * cfg.lambda_r)
}

/// `1 / (1 + μ_t ‖t‖ + μ_r ‖θu‖)`.
pub fn confidence_weight(e: &FeatureError) -> f64 {
    1.0 / (1.0 + MU_T * e.trans_norm() + MU_R * e.rot_norm())
}

/// Detector and matcher used inside the loop.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SessionOptions {
    pub detector: DetectorConfig,
    pub registration: RegistrationConfig,
}

/// Runs one servo session of `camera` from the probe pose `init` toward the
/// view captured in `target`.
pub fn run_session(
    target: &RestoredView,
    camera: &RigCamera,
    plane: &PlaneSpec,
    init: &Pose,
    cfg: &ServoConfig,
) -> Result<ServoResult, ServoError> {
    let fail = |iteration: usize, reason: String| ServoError::SessionFailed { iteration, reason };
    let target_feats = detect_and_describe(&target.image, &SessionOptions::default().detector)
        .map_err(|e| fail(0, e.to_string()))?;
    run_session_with(&target_feats, camera, plane, init, cfg, &SessionOptions::default())
}

/// Session against precomputed target features.
pub fn run_session_with(
    target: &[Feature],
    camera: &RigCamera,
    plane: &PlaneSpec,
    init: &Pose,
    cfg: &ServoConfig,
    opts: &SessionOptions,
) -> Result<ServoResult, ServoError> {
    cfg.validate()?;
    let fail = |iteration: usize, reason: String| ServoError::SessionFailed { iteration, reason };
    let k = &camera.intrinsics;
    let mut cam = camera.camera_pose(init);
    let mut trace = Vec::with_capacity(cfg.max_iter);
    let mut last = FeatureError::zero();
    let mut measured_at = cam;
    for iteration in 1..=cfg.max_iter {
        measured_at = cam;
        let sim = render_view(&cam, k, plane).map_err(|e| fail(iteration, e.to_string()))?;
        let sim_feats =
            detect_and_describe(&sim, &opts.detector).map_err(|e| fail(iteration, e.to_string()))?;
        let reg = register(&sim_feats, target, &opts.registration, "sim", "target")
            .map_err(|e| fail(iteration, e.to_string()))?;
        let plane_s = plane.in_camera(&cam);
        let e = decompose_homography(&reg.fit.homography, k, &plane_s.normal, plane_s.distance)
            .map_err(|e| fail(iteration, e.to_string()))?;
        trace.push(TraceEntry {
            iteration,
            trans_err: e.trans_norm(),
            rot_err: e.rot_norm(),
        });
        last = e;
        if cfg.is_converged(&e) {
            return Ok(finish(camera, cam, e, iteration, true, trace));
        }
        cam = integrate_twist(&cam, &control_step(&e, cfg), cfg.dt);
    }
    // report relative to the pose the last residual was measured at, not the
    // one after the final (unverified) step
    Ok(finish(camera, measured_at, last, cfg.max_iter, false, trace))
}

/// The reported camera pose is the measured one composed with its measured
/// residual, i.e. the target camera as seen from the last simulated view.
fn finish(
    camera: &RigCamera,
    measured_at: Pose,
    residual: FeatureError,
    iterations: usize,
    converged: bool,
    trace: Vec<TraceEntry>,
) -> ServoResult {
    let cam = measured_at * residual.pose();
    ServoResult {
        pose: camera.probe_pose(&cam),
        camera_pose: cam,
        weight: confidence_weight(&residual),
        iterations,
        converged,
        residual,
        trace,
    }
}

/// Writes a session trace as `iter,trans_err_mm,rot_err_deg`.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceEntry]) -> std::io::Result<()> {
    writeln!(w, "iter,trans_err_mm,rot_err_deg")?;
    for t in trace {
        writeln!(
            w,
            "{},{:.6},{:.6}",
            t.iteration,
            t.trans_err * 1e3,
            t.rot_err.to_degrees()
        )?;
    }
    Ok(())
}

/// Feature error between two known camera poses, as an ideal measurement
/// would report it: the pose of `target` in the frame of `sim`.
pub fn exact_feature_error(sim: &Pose, target: &Pose) -> FeatureError {
    let rel = sim.inverse() * *target;
    FeatureError {
        translation: rel.translation,
        theta_u: rel.rotation.axis_angle(),
        scale: 1.0,
    }
}

#[cfg(test)]
mod tests;
