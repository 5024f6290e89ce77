//! Rigid-body math used throughout the pipeline.
//!
//! Conventions:
//!
//! - Quaternions are Hamilton, stored `(w, x, y, z)`.
//! - A [`Pose`] `T_a_b` maps coordinates expressed in frame `b` into frame `a`:
//!   `x_a = R * x_b + t`. Composition `T_a_b * T_b_c = T_a_c`.
//! - Internal units are meters and radians.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Unit quaternion rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from raw `(w, x, y, z)` components, normalizing them.
    ///
    /// Returns `None` for a zero or non-finite quaternion.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 {
            return None;
        }
        Some(Self(UnitQuaternion::new_unchecked(q / n)))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self(q)
    }

    /// Rotation of `theta * u` (axis-angle vector, radians).
    pub fn from_axis_angle(theta_u: &Vector3<f64>) -> Self {
        let theta = theta_u.norm();
        if theta < 1e-300 {
            return Self::identity();
        }
        let half = 0.5 * theta;
        // sin(θ/2)/θ computed stably for tiny angles.
        let k = if theta < 1e-6 {
            0.5 - theta * theta / 48.0
        } else {
            half.sin() / theta
        };
        let q = Quaternion::new(half.cos(), k * theta_u.x, k * theta_u.y, k * theta_u.z);
        Self(UnitQuaternion::new_normalize(q))
    }

    /// Roll-pitch-yaw in radians, applied as `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self(UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    /// Projects an arbitrary 3x3 matrix onto SO(3) and converts it with
    /// Shepperd's largest-diagonal branch selection.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let r = project_to_so3(m);
        let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
        let (w, x, y, z);
        if trace > r[(0, 0)].max(r[(1, 1)]).max(r[(2, 2)]) {
            let s = (1.0 + trace).sqrt() * 2.0;
            w = 0.25 * s;
            x = (r[(2, 1)] - r[(1, 2)]) / s;
            y = (r[(0, 2)] - r[(2, 0)]) / s;
            z = (r[(1, 0)] - r[(0, 1)]) / s;
        } else if r[(0, 0)] >= r[(1, 1)] && r[(0, 0)] >= r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(2, 1)] - r[(1, 2)]) / s;
            x = 0.25 * s;
            y = (r[(0, 1)] + r[(1, 0)]) / s;
            z = (r[(0, 2)] + r[(2, 0)]) / s;
        } else if r[(1, 1)] >= r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(0, 2)] - r[(2, 0)]) / s;
            x = (r[(0, 1)] + r[(1, 0)]) / s;
            y = 0.25 * s;
            z = (r[(1, 2)] + r[(2, 1)]) / s;
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            w = (r[(1, 0)] - r[(0, 1)]) / s;
            x = (r[(0, 2)] + r[(2, 0)]) / s;
            y = (r[(1, 2)] + r[(2, 1)]) / s;
            z = 0.25 * s;
        }
        Self::from_wxyz(w, x, y, z).unwrap_or_else(Self::identity)
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    /// `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Axis-angle vector `θu` with `θ ∈ [0, π]`.
    pub fn axis_angle(&self) -> Vector3<f64> {
        let q = self.0.quaternion();
        // q and -q are the same rotation; pick w >= 0 so θ <= π.
        let (w, v) = if q.w < 0.0 {
            (-q.w, -q.imag())
        } else {
            (q.w, q.imag())
        };
        let s = v.norm();
        if s < 1e-300 {
            return Vector3::zeros();
        }
        let theta = 2.0 * s.atan2(w);
        v * (theta / s)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        self.axis_angle().norm()
    }

    /// Geodesic distance to `other`, radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        // 4·atan2(‖a − b‖, ‖a + b‖) on the same hemisphere: well conditioned
        // everywhere and exactly zero for equal rotations
        let a = self.0.quaternion().coords;
        let mut b = other.0.quaternion().coords;
        if a.dot(&b) < 0.0 {
            b = -b;
        }
        4.0 * (a - b).norm().atan2((a + b).norm())
    }

    pub fn dot(&self, other: &Rotation) -> f64 {
        self.0.quaternion().coords.dot(&other.0.quaternion().coords)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// Nearest rotation matrix in the Frobenius sense.
pub fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Geodesic interpolation between two rotations; `s = 0` gives `q1`, `s = 1`
/// gives `q2` (up to sign). The shorter arc is always taken.
pub fn slerp(q1: &Rotation, q2: &Rotation, s: f64) -> Rotation {
    let a = q1.0.quaternion().coords;
    let mut b = q2.0.quaternion().coords;
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let dot = dot.min(1.0);
    let omega = dot.acos();
    let coords = if omega < 1e-10 {
        a * (1.0 - s) + b * s
    } else {
        let so = omega.sin();
        a * (((1.0 - s) * omega).sin() / so) + b * ((s * omega).sin() / so)
    };
    let q = Quaternion::from(coords);
    Rotation(UnitQuaternion::new_normalize(q))
}

/// Rigid transform in SE(3).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self::new(r_inv, -r_inv.rotate(&self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// SE(3) exponential of the twist `(rho, phi)`.
    pub fn exp(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Self {
        Self::new(Rotation::from_axis_angle(phi), left_jacobian(phi) * rho)
    }

    /// SE(3) logarithm, returning `(rho, phi)`.
    pub fn log(&self) -> (Vector3<f64>, Vector3<f64>) {
        let phi = self.rotation.axis_angle();
        let rho = left_jacobian_inverse(&phi) * self.translation;
        (rho, phi)
    }

    /// Translation distance and rotation angle between two poses.
    pub fn distance_to(&self, other: &Pose) -> (f64, f64) {
        (
            (self.translation - other.translation).norm(),
            self.rotation.angle_to(&other.rotation),
        )
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation.rotate(&rhs.translation) + self.translation,
        )
    }
}

impl Mul for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        *self * *rhs
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let (a, b) = if theta < 1e-5 {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Matrix3::identity() + k * a + k * k * b
}

fn left_jacobian_inverse(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let c = if theta < 1e-5 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / (theta * theta)
    };
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// Linear (m/s) and angular (rad/s) velocity.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|c| c.is_finite())
    }
}

/// Applies `v` for `dt` seconds as a body-frame increment:
/// `p * exp(v * dt)`.
pub fn integrate_twist(p: &Pose, v: &Twist, dt: f64) -> Pose {
    let step = Pose::exp(&(v.linear * dt), &(v.angular * dt));
    *p * step
}

/// One line of the pose CSV format `stamp,x,y,z,qw,qx,qy,qz`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StampedPose {
    pub stamp: f64,
    pub pose: Pose,
}

#[derive(Debug, thiserror::Error)]
pub enum PoseRecordError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl fmt::Display for StampedPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.pose.translation;
        let [w, x, y, z] = self.pose.rotation.wxyz();
        write!(
            f,
            "{},{},{},{},{},{},{},{}",
            self.stamp, t.x, t.y, t.z, w, x, y, z
        )
    }
}

pub fn parse_pose_record(line: &str, line_no: usize) -> Result<StampedPose, PoseRecordError> {
    let err = |reason: String| PoseRecordError::Parse {
        line: line_no,
        reason,
    };
    let fields: Vec<f64> = line
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| err(e.to_string()))?;
    if fields.len() != 8 {
        return Err(err(format!("expected 8 fields, found {}", fields.len())));
    }
    let rotation = Rotation::from_wxyz(fields[4], fields[5], fields[6], fields[7])
        .ok_or_else(|| err("degenerate quaternion".into()))?;
    Ok(StampedPose {
        stamp: fields[0],
        pose: Pose::new(rotation, Vector3::new(fields[1], fields[2], fields[3])),
    })
}

/// Reads pose records, skipping blank lines and `#` comments.
pub fn read_pose_csv<R: BufRead>(reader: R) -> Result<Vec<StampedPose>, PoseRecordError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(parse_pose_record(trimmed, i + 1)?);
    }
    Ok(out)
}

pub fn write_pose_csv<W: Write>(mut w: W, poses: &[StampedPose]) -> std::io::Result<()> {
    writeln!(w, "# stamp,x,y,z,qw,qx,qy,qz")?;
    for p in poses {
        writeln!(w, "{p}")?;
    }
    Ok(())
}

/// Serde form of a pose: meters plus `(w, x, y, z)` quaternion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let [qw, qx, qy, qz] = p.rotation.wxyz();
        Self {
            x: p.translation.x,
            y: p.translation.y,
            z: p.translation.z,
            qw,
            qx,
            qy,
            qz,
        }
    }
}

impl TryFrom<PoseRecord> for Pose {
    type Error = String;
    fn try_from(r: PoseRecord) -> Result<Self, String> {
        let rot = Rotation::from_wxyz(r.qw, r.qx, r.qy, r.qz)
            .ok_or_else(|| "degenerate quaternion".to_string())?;
        Ok(Pose::new(rot, Vector3::new(r.x, r.y, r.z)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI};

    fn random_rotation(rng: &mut impl Rng) -> Rotation {
        let w: f64 = rng.random_range(-1.0..1.0);
        let x: f64 = rng.random_range(-1.0..1.0);
        let y: f64 = rng.random_range(-1.0..1.0);
        let z: f64 = rng.random_range(-1.0..1.0);
        Rotation::from_wxyz(w, x, y, z).unwrap()
    }

    fn same_rotation(a: &Rotation, b: &Rotation, tol: f64) -> bool {
        a.dot(b).abs() > 1.0 - tol
    }

    // Rodrigues' formula, written independently of the quaternion path.
    fn rodrigues(theta_u: &Vector3<f64>) -> Matrix3<f64> {
        let theta = theta_u.norm();
        if theta == 0.0 {
            return Matrix3::identity();
        }
        let k = skew(&(theta_u / theta));
        Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos())
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let q = Rotation::from_rpy(0.1, -0.3, 0.7);
        assert!(same_rotation(&slerp(&q, &q, 0.5), &q, 1e-12));

        let z90 = Rotation::from_axis_angle(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let mid = slerp(&Rotation::identity(), &z90, 0.5);
        assert_relative_eq!(mid.axis_angle(), Vector3::new(0.0, 0.0, FRAC_PI_4), epsilon = 1e-12);
    }

    #[test]
    fn slerp_takes_short_arc() {
        let a = Rotation::from_axis_angle(&Vector3::new(0.0, 0.0, 0.2));
        let q = a.quaternion().quaternion();
        let neg = Rotation::from_wxyz(-q.w, -q.i, -q.j, -q.k).unwrap();
        let mid = slerp(&Rotation::identity(), &neg, 0.5);
        assert_relative_eq!(mid.angle(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn slerp_matches_normalized_lerp_for_close_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let qa = random_rotation(&mut rng);
            let delta = Vector3::new(
                rng.random_range(-1e-4..1e-4),
                rng.random_range(-1e-4..1e-4),
                rng.random_range(-1e-4..1e-4),
            );
            let qb = qa * Rotation::from_axis_angle(&delta);
            let s: f64 = rng.random_range(0.0..1.0);
            // oracle: normalized linear interpolation of the raw coefficients
            let a = qa.quaternion().coords;
            let mut b = qb.quaternion().coords;
            if a.dot(&b) < 0.0 {
                b = -b;
            }
            let l = a * (1.0 - s) + b * s;
            let l = l / l.norm();
            let got = slerp(&qa, &qb, s).quaternion().coords;
            assert!((got - l).norm() < 1e-6 || (got + l).norm() < 1e-6);
        }
    }

    #[test]
    fn axis_angle_canonical_cases() {
        assert_eq!(Rotation::identity().axis_angle(), Vector3::zeros());
        let r = Rotation::from_rpy(FRAC_PI_6, 0.0, 0.0);
        assert_relative_eq!(r.axis_angle(), Vector3::new(FRAC_PI_6, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn axis_angle_near_pi_via_matrix() {
        let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
        for theta in [PI, PI - 1e-9, PI - 1e-4] {
            let m = rodrigues(&(axis * theta));
            let r = Rotation::from_matrix(&m);
            let aa = r.axis_angle();
            assert!(aa.norm() <= PI + 1e-12);
            assert_relative_eq!(aa.norm(), theta, epsilon = 1e-7);
            assert!(aa.normalize().dot(&axis).abs() > 1.0 - 1e-9);
            assert_relative_eq!(r.matrix(), m, epsilon = 1e-9);
        }
    }

    #[test]
    fn axis_angle_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            let aa = r.axis_angle();
            assert!(aa.norm() <= PI + 1e-12);
            let back = Rotation::from_axis_angle(&aa);
            assert!(same_rotation(&back, &r, 1e-12));
            assert_relative_eq!(back.matrix(), r.matrix(), epsilon = 1e-9);
        }
    }

    #[test]
    fn rotation_matrix_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = random_rotation(&mut rng).matrix();
            assert_relative_eq!(m.transpose() * m, Matrix3::identity(), epsilon = 1e-9);
            assert_relative_eq!(m.determinant(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn integrate_twist_cases() {
        let p = Pose::new(Rotation::from_rpy(0.2, 0.1, -0.4), Vector3::new(0.1, 0.2, 0.3));
        assert_eq!(integrate_twist(&p, &Twist::zero(), 1.0), p);

        let moved = integrate_twist(
            &Pose::identity(),
            &Twist::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()),
            0.5,
        );
        assert_relative_eq!(moved.translation, Vector3::new(0.5, 0.0, 0.0), epsilon = 1e-15);

        let w = Vector3::new(0.0, 0.0, FRAC_PI_2);
        let rotated = integrate_twist(&Pose::identity(), &Twist::new(Vector3::zeros(), w), 1.0);
        assert_relative_eq!(rotated.rotation.matrix(), rodrigues(&w), epsilon = 1e-12);
    }

    #[test]
    fn integrate_twist_is_body_frame() {
        let p = Pose::new(Rotation::from_rpy(0.0, 0.0, FRAC_PI_2), Vector3::zeros());
        let moved = integrate_twist(
            &p,
            &Twist::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()),
            1.0,
        );
        // body x is world y after a 90° yaw
        assert_relative_eq!(moved.translation, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let rho = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let dir = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let phi = dir * rng.random_range(0.0..PI - 1e-3);
            let p = integrate_twist(&Pose::identity(), &Twist::new(rho, phi), 1.0);
            let (r2, p2) = p.log();
            assert_relative_eq!(r2, rho, epsilon = 1e-8);
            assert_relative_eq!(p2, phi, epsilon = 1e-8);
        }
    }

    #[test]
    fn composition_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let p = Pose::new(
                random_rotation(&mut rng),
                Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ),
            );
            let i = (p * p.inverse()).matrix() - Matrix4::identity();
            assert!(i.amax() < 1e-9);
            let j = (p.inverse() * p).matrix() - Matrix4::identity();
            assert!(j.amax() < 1e-9);
        }
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut rp = || {
            Pose::new(
                random_rotation(&mut rng),
                Vector3::new(rng.random_range(-1.0..1.0), 0.3, -0.2),
            )
        };
        let (a, b, c) = (rp(), rp(), rp());
        let l = ((a * b) * c).matrix();
        let r = (a * (b * c)).matrix();
        assert!((l - r).amax() < 1e-12);
    }

    #[test]
    fn pose_csv_round_trip_with_comments() {
        let text = "# header\n0.5,0.1,0.2,0.3,1,0,0,0\n\n1.0,0,0,0.08,0,1,0,0\n";
        let poses = read_pose_csv(text.as_bytes()).unwrap();
        assert_eq!(poses.len(), 2);
        assert_eq!(poses[0].stamp, 0.5);
        let mut buf = Vec::new();
        write_pose_csv(&mut buf, &poses).unwrap();
        let again = read_pose_csv(buf.as_slice()).unwrap();
        assert_eq!(again, poses);
    }

    #[test]
    fn pose_csv_rejects_bad_lines() {
        assert!(read_pose_csv("1,2,3\n".as_bytes()).is_err());
        assert!(read_pose_csv("0,0,0,0,0,0,0,0\n".as_bytes()).is_err());
    }
}
