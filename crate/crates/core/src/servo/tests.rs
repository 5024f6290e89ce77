use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use approx::assert_abs_diff_eq;
use nalgebra::Vector3;

use super::*;
use crate::geometry::Rotation;
use crate::image::pattern::{generate_pattern, PatternParams};
use crate::image::ImageBuffer;
use crate::registration::Homography;
use crate::simcam::CameraRig;

fn plane() -> &'static PlaneSpec {
    static PLANE: OnceLock<PlaneSpec> = OnceLock::new();
    PLANE.get_or_init(|| PlaneSpec::new(Arc::new(generate_pattern(&PatternParams::default())), [0.8, 0.8]))
}

fn probe_at(x: f64, y: f64, h: f64, yaw: f64) -> Pose {
    Pose::new(
        Rotation::from_rpy(0.0, 0.0, yaw) * Rotation::from_axis_angle(&(Vector3::x() * PI)),
        Vector3::new(x, y, h),
    )
}

/// An ideal restoration: the clean render with its exact homography.
fn target_view(camera: &RigCamera, probe: &Pose) -> RestoredView {
    let wc = camera.camera_pose(probe);
    let image = render_view(&wc, &camera.intrinsics, plane()).unwrap();
    let h = plane().pattern_to_image(&camera.intrinsics, &wc);
    RestoredView {
        image,
        h_pattern_to_view: Homography::new(h, "pattern", "view").unwrap(),
        inlier_ratio: 1.0,
    }
}

fn offset(probe: &Pose, mm: f64, deg: f64) -> Pose {
    let dir = Vector3::new(0.6, -0.48, 0.64).normalize();
    let axis = Vector3::new(-0.3, 0.8, 0.52).normalize();
    *probe * Pose::new(Rotation::from_axis_angle(&(axis * deg.to_radians())), dir * mm * 1e-3)
}

#[test]
fn control_law_examples() {
    let cfg = ServoConfig::default();
    let v = control_step(&FeatureError::zero(), &cfg);
    assert_eq!(v, Twist::zero());

    let e = FeatureError {
        translation: Vector3::new(0.002, 0.0, 0.0),
        theta_u: Vector3::new(0.0, 0.0, 0.2),
        scale: 1.0,
    };
    let v = control_step(&e, &cfg);
    assert_abs_diff_eq!(v.linear, Vector3::new(0.001, 0.0, 0.0), epsilon = 1e-15);
    assert_abs_diff_eq!(v.angular, Vector3::new(0.0, 0.0, 0.1), epsilon = 1e-15);
}

#[test]
fn confidence_weight_examples() {
    assert_eq!(confidence_weight(&FeatureError::zero()), 1.0);
    let mut e = FeatureError::zero();
    e.translation = Vector3::new(0.0, 0.001, 0.0);
    assert_abs_diff_eq!(confidence_weight(&e), 0.5, epsilon = 1e-12);
    let mut e = FeatureError::zero();
    e.theta_u = Vector3::new(0.0, 0.0, 0.02);
    assert_abs_diff_eq!(confidence_weight(&e), 0.5, epsilon = 1e-12);
    e.translation = Vector3::new(1.0, 0.0, 0.0);
    let w = confidence_weight(&e);
    assert!(w > 0.0 && w < 0.01);
}

#[test]
fn config_validation() {
    assert!(ServoConfig::default().validate().is_ok());
    let bad = [
        ServoConfig { lambda_t: 0.0, ..Default::default() },
        ServoConfig { lambda_r: 1.5, ..Default::default() },
        ServoConfig { trans_tol: 0.0, ..Default::default() },
        ServoConfig { rot_tol: -1.0, ..Default::default() },
        ServoConfig { max_iter: 0, ..Default::default() },
        ServoConfig { dt: 0.0, ..Default::default() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(ServoError::InvalidConfig(_))), "{cfg:?}");
    }
}

#[test]
fn exact_error_contracts_geometrically() {
    let cfg = ServoConfig::default();
    let target = probe_at(0.01, -0.02, 0.13, 0.4);
    let mut cam = offset(&target, 30.0, 10.0);
    let bound = 1.0 - cfg.lambda_t.min(cfg.lambda_r) * cfg.dt + 0.05;
    let mut prev = exact_feature_error(&cam, &target);
    for _ in 0..30 {
        if cfg.is_converged(&prev) {
            break;
        }
        cam = integrate_twist(&cam, &control_step(&prev, &cfg), cfg.dt);
        let e = exact_feature_error(&cam, &target);
        assert!(e.trans_norm() <= bound * prev.trans_norm() + 1e-12);
        assert!(e.rot_norm() <= bound * prev.rot_norm() + 1e-12);
        prev = e;
    }
    assert!(cfg.is_converged(&prev));
}

#[test]
fn aligned_start_converges_immediately() {
    let rig = CameraRig::default_dual();
    let cam = &rig.cameras[0];
    let p = probe_at(0.02, 0.01, 0.08, 0.3);
    let target = target_view(cam, &p);
    let r = run_session(&target, cam, plane(), &p, &ServoConfig::default()).unwrap();
    assert!(r.converged);
    assert_eq!(r.iterations, 1);
    assert!(r.weight > 0.95, "weight {}", r.weight);
    let (dt, dr) = r.pose.distance_to(&p);
    assert!(dt < 0.05e-3 && dr < 0.05f64.to_radians(), "{dt} {dr}");
}

#[test]
fn offset_start_converges_to_target() {
    let rig = CameraRig::default_dual();
    for (i, cam) in rig.cameras.iter().enumerate() {
        let p = probe_at(-0.03 + 0.05 * i as f64, 0.02, 0.085, 1.1 - 2.0 * i as f64);
        let target = target_view(cam, &p);
        let cfg = ServoConfig::default();
        let r = run_session(&target, cam, plane(), &offset(&p, 30.0, 10.0), &cfg).unwrap();
        assert!(r.converged, "{:?}", r.trace);
        assert!(r.iterations <= cfg.max_iter);
        assert!(r.residual.trans_norm() < cfg.trans_tol && r.residual.rot_norm() < cfg.rot_tol);
        assert_eq!(r.trace.len(), r.iterations);
        let (dt, dr) = r.pose.distance_to(&p);
        assert!(dt < 0.2e-3, "translation error {dt}");
        assert!(dr < 0.2f64.to_radians(), "rotation error {dr}");
        assert!(r.weight > 0.0 && r.weight <= 1.0);
        // first entry reflects the planted offset
        assert!((r.trace[0].trans_err - 0.03).abs() < 0.015, "{:?}", r.trace[0]);
    }
}

#[test]
fn sessions_are_deterministic() {
    let rig = CameraRig::default_dual();
    let cam = &rig.cameras[1];
    let p = probe_at(0.0, -0.03, 0.09, -0.7);
    let target = target_view(cam, &p);
    let init = offset(&p, 12.0, 4.0);
    let a = run_session(&target, cam, plane(), &init, &ServoConfig::default()).unwrap();
    let b = run_session(&target, cam, plane(), &init, &ServoConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn black_target_fails() {
    let rig = CameraRig::default_dual();
    let cam = &rig.cameras[0];
    let p = probe_at(0.0, 0.0, 0.08, 0.0);
    let mut target = target_view(cam, &p);
    target.image = ImageBuffer::new(cam.intrinsics.width, cam.intrinsics.height);
    let err = run_session(&target, cam, plane(), &p, &ServoConfig::default()).unwrap_err();
    assert!(matches!(err, ServoError::SessionFailed { .. }), "{err}");
}

#[test]
fn max_iter_exhaustion_is_reported() {
    let rig = CameraRig::default_dual();
    let cam = &rig.cameras[0];
    let p = probe_at(0.01, 0.0, 0.08, 0.2);
    let target = target_view(cam, &p);
    let cfg = ServoConfig { max_iter: 2, ..Default::default() };
    let r = run_session(&target, cam, plane(), &offset(&p, 30.0, 10.0), &cfg).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 2);
    assert_eq!(r.trace.len(), 2);
    assert!(r.weight < 0.5);
}

#[test]
fn trace_csv_format() {
    let trace = [
        TraceEntry { iteration: 1, trans_err: 0.03, rot_err: 0.1f64.to_radians() },
        TraceEntry { iteration: 2, trans_err: 0.015, rot_err: 0.05f64.to_radians() },
    ];
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &trace).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iter,trans_err_mm,rot_err_deg");
    assert_eq!(lines[1], "1,30.000000,0.100000");
    assert_eq!(lines[2], "2,15.000000,0.050000");
}
