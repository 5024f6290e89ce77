//! Relative pose from a plane-induced homography with a known plane, and a
//! planar-target PnP baseline.
//!
//! With the plane `{X : -nᵀX = d}` expressed in the simulated camera `S`, the
//! calibrated homography `A = K⁻¹ H K` equals `ξ Rᵀ (I + t nᵀ / d)`, where
//! `(R, t)` is the pose of the target camera `G` in `S`. Vectors orthogonal to
//! `n` pass through the bracket unchanged, which pins both the scale (middle
//! singular value) and `Rᵀ` once `n` is known.

use nalgebra::{Matrix3, SMatrix, SVector, Vector2, Vector3};

use crate::geometry::{project_to_so3, Pose, Rotation};
use crate::registration::{dlt_homography, Correspondence, Homography};
use crate::simcam::Intrinsics;

#[derive(Debug, thiserror::Error)]
pub enum PoseError {
    #[error("homography decomposition failed: {0}")]
    DecompositionFailed(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
}

/// Pose discrepancy between the simulated and target views.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureError {
    /// `t_G^S`, meters.
    pub translation: Vector3<f64>,
    /// `θu`, radians.
    pub theta_u: Vector3<f64>,
    /// Homography scale `ξ`.
    pub scale: f64,
}

impl FeatureError {
    pub fn zero() -> Self {
        Self {
            translation: Vector3::zeros(),
            theta_u: Vector3::zeros(),
            scale: 1.0,
        }
    }

    /// Pose of the target camera in the simulated camera frame.
    pub fn pose(&self) -> Pose {
        Pose::new(Rotation::from_axis_angle(&self.theta_u), self.translation)
    }

    pub fn trans_norm(&self) -> f64 {
        self.translation.norm()
    }

    pub fn rot_norm(&self) -> f64 {
        self.theta_u.norm()
    }
}

/// Acceptance limits for a decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecomposeConfig {
    /// Maximum angle between the recovered and the known plane normal.
    pub max_normal_deviation: f64,
    /// The normal check applies only when `‖t‖ / d` exceeds this.
    pub normal_check_min_ratio: f64,
    /// Frobenius residual on unit-norm matrices.
    pub residual_tol: f64,
    pub max_polish_steps: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            max_normal_deviation: 45f64.to_radians(),
            normal_check_min_ratio: 0.02,
            residual_tol: 1e-3,
            max_polish_steps: 10,
        }
    }
}

/// `Rᵀ (I + t nᵀ / d)`.
fn model(r: &Matrix3<f64>, t: &Vector3<f64>, n: &Vector3<f64>, d: f64) -> Matrix3<f64> {
    r.transpose() * (Matrix3::identity() + t * n.transpose() / d)
}

/// Residual of `a` (unit norm) against the best-scaled model, and that scale.
fn fit_residual(a: &Matrix3<f64>, g: &Matrix3<f64>) -> (f64, f64) {
    let gg = g.norm_squared();
    let xi = if gg > 0.0 { a.dot(g) / gg } else { 0.0 };
    ((a - g * xi).norm(), xi)
}

fn perturb(r: &Matrix3<f64>, t: &Vector3<f64>, delta: &SVector<f64, 6>) -> (Matrix3<f64>, Vector3<f64>) {
    let dr = Rotation::from_axis_angle(&Vector3::new(delta[0], delta[1], delta[2])).matrix();
    (dr * r, t + Vector3::new(delta[3], delta[4], delta[5]))
}

/// Gauss–Newton on the Frobenius residual over a rotation increment and a
/// translation increment, with `ξ` re-solved in closed form. Steps that do
/// not reduce the residual are halved and eventually rejected, so the
/// residual is monotone.
fn polish(
    a: &Matrix3<f64>,
    mut r: Matrix3<f64>,
    mut t: Vector3<f64>,
    n: &Vector3<f64>,
    d: f64,
    steps: usize,
) -> (Matrix3<f64>, Vector3<f64>, f64) {
    let res_vec = |r: &Matrix3<f64>, t: &Vector3<f64>| -> SVector<f64, 9> {
        let g = model(r, t, n, d);
        let (_, xi) = fit_residual(a, &g);
        SVector::<f64, 9>::from_iterator((a - g * xi).iter().copied())
    };
    let mut cur = res_vec(&r, &t);
    let mut cost = cur.norm();
    for _ in 0..steps {
        if cost < 1e-15 {
            break;
        }
        let mut jac = SMatrix::<f64, 9, 6>::zeros();
        for k in 0..6 {
            // translation is in meters against d ~ 0.1 m; same step works
            let h = 1e-7;
            let mut e = SVector::<f64, 6>::zeros();
            e[k] = h;
            let (rp, tp) = perturb(&r, &t, &e);
            e[k] = -h;
            let (rm, tm) = perturb(&r, &t, &e);
            jac.set_column(k, &((res_vec(&rp, &tp) - res_vec(&rm, &tm)) / (2.0 * h)));
        }
        let jtj = jac.transpose() * jac;
        let jtr = jac.transpose() * cur;
        let Some(step) = jtj.cholesky().map(|c| -c.solve(&jtr)) else {
            break;
        };
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let (rn, tn) = perturb(&r, &t, &(step * alpha));
            let rv = res_vec(&rn, &tn);
            if rv.norm() < cost {
                r = project_to_so3(&rn);
                t = tn;
                cur = rv;
                cost = rv.norm();
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (r, t, cost)
}

/// Recovers `(ξ, R, t)` of the target camera relative to the simulated one
/// from `h: sim → target`, given the plane normal `n` (unit, in the sim
/// frame, pointing toward the camera) and distance `d`.
pub fn decompose_homography(
    h: &Homography,
    k: &Intrinsics,
    n: &Vector3<f64>,
    d: f64,
) -> Result<FeatureError, PoseError> {
    decompose_homography_with(h.matrix(), k, n, d, &DecomposeConfig::default())
}

pub fn decompose_homography_with(
    h: &Matrix3<f64>,
    k: &Intrinsics,
    n: &Vector3<f64>,
    d: f64,
    cfg: &DecomposeConfig,
) -> Result<FeatureError, PoseError> {
    let fail = |m: String| Err(PoseError::DecompositionFailed(m));
    if !(d > 0.0) || (n.norm() - 1.0).abs() > 1e-6 {
        return fail(format!("invalid plane (|n| = {}, d = {d})", n.norm()));
    }
    let a = k.k_inv() * h * k.k();
    if !a.iter().all(|v| v.is_finite()) {
        return fail("non-finite homography".into());
    }
    let sv = a.svd(false, false).singular_values;
    let mut s = sv.as_slice().to_vec();
    s.sort_by(|x, y| y.total_cmp(x));
    let xi = s[1];
    if !(xi > 1e-12) {
        return fail("rank-deficient homography".into());
    }
    let mut m = a / xi;
    if m.determinant() < 0.0 {
        m = -m;
    }
    // orthonormal basis of the plane directions
    let seed = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = n.cross(&seed).normalize();
    let e2 = n.cross(&e1);
    let (m1, m2) = (m * e1, m * e2);
    let rt = Matrix3::from_columns(&[m1, m2, m1.cross(&m2)])
        * Matrix3::from_columns(&[e1, e2, e1.cross(&e2)]).transpose();
    let r = project_to_so3(&rt).transpose();
    let t = d * r * (m - r.transpose()) * n;

    let a_unit = a / a.norm();
    let (r, t, _) = polish(&a_unit, r, t, n, d, cfg.max_polish_steps);
    let (residual, scale) = fit_residual(&a_unit, &model(&r, &t, n, d));
    let scale = scale * a.norm();

    if d + n.dot(&t) <= 0.0 {
        return fail("recovered target camera is not in front of the plane".into());
    }
    // The rank-one part Rᵀ t nᵀ / d carries the plane normal in its row
    // space; its direction is only resolved once ‖t‖ / d is well above the
    // measurement noise.
    if t.norm() > cfg.normal_check_min_ratio * d {
        let svd = (m - r.transpose()).svd(false, true);
        let v_t = svd.v_t.expect("v_t requested");
        let (imax, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("three singular values");
        let n_est: Vector3<f64> = v_t.row(imax).transpose();
        let deviation = n_est.dot(n).abs().min(1.0).acos();
        if deviation > cfg.max_normal_deviation {
            return fail(format!(
                "recovered normal deviates {:.1}° from the known plane",
                deviation.to_degrees()
            ));
        }
    }
    if residual > cfg.residual_tol {
        return fail(format!("Frobenius residual {residual:.2e} above tolerance"));
    }
    let theta_u = Rotation::from_matrix(&r).axis_angle();
    Ok(FeatureError {
        translation: t,
        theta_u,
        scale,
    })
}

/// Camera pose (`world_from_camera`) from correspondences between points on
/// the world plane `z = 0` (meters) and pixels.
pub fn planar_pnp(
    corr: &[(Vector2<f64>, Vector2<f64>)],
    k: &Intrinsics,
) -> Result<Pose, PoseError> {
    if corr.len() < 4 {
        return Err(PoseError::DegenerateConfiguration(format!(
            "need at least 4 points, got {}",
            corr.len()
        )));
    }
    let n = corr.len() as f64;
    let mean = corr.iter().fold(Vector2::zeros(), |acc, c| acc + c.0) / n;
    let mut cov = nalgebra::Matrix2::zeros();
    for c in corr {
        let p = c.0 - mean;
        cov += p * p.transpose();
    }
    let ev = cov.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    if !(hi > 0.0) || lo / hi < 1e-10 {
        return Err(PoseError::DegenerateConfiguration(
            "plane points are collinear".into(),
        ));
    }
    let dlt: Vec<Correspondence> = corr
        .iter()
        .map(|(p, q)| Correspondence { src: *p, dst: *q })
        .collect();
    let h = dlt_homography(&dlt).ok_or_else(|| {
        PoseError::DegenerateConfiguration("plane-to-image homography is singular".into())
    })?;
    let b = k.k_inv() * h;
    let scale = 2.0 / (b.column(0).norm() + b.column(1).norm());
    let mut b = b * scale;
    if b[(2, 2)] < 0.0 {
        b = -b;
    }
    let r1 = b.column(0).into_owned();
    let r2 = b.column(1).into_owned();
    let r = project_to_so3(&Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]));
    let cam_from_world = Pose::new(Rotation::from_matrix(&r), b.column(2).into_owned());
    let refined = refine_reprojection(cam_from_world, corr, k, 20);
    Ok(refined.inverse())
}

fn reprojection(
    pose: &Pose,
    corr: &[(Vector2<f64>, Vector2<f64>)],
    k: &Intrinsics,
) -> Option<Vec<f64>> {
    let km = k.k();
    let mut out = Vec::with_capacity(corr.len() * 2);
    for (p, q) in corr {
        let x = pose.transform_point(&Vector3::new(p.x, p.y, 0.0));
        if x.z <= 1e-9 {
            return None;
        }
        let u = km * (x / x.z);
        out.push(u.x - q.x);
        out.push(u.y - q.y);
    }
    Some(out)
}

/// Levenberg-damped Gauss–Newton on pixel reprojection error.
fn refine_reprojection(
    mut pose: Pose,
    corr: &[(Vector2<f64>, Vector2<f64>)],
    k: &Intrinsics,
    steps: usize,
) -> Pose {
    let Some(mut res) = reprojection(&pose, corr, k) else {
        return pose;
    };
    let sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut cost = sq(&res);
    let mut lambda = 1e-6;
    let apply = |p: &Pose, d: &SVector<f64, 6>| {
        Pose::exp(&Vector3::new(d[3], d[4], d[5]), &Vector3::new(d[0], d[1], d[2])) * *p
    };
    for _ in 0..steps {
        let m = res.len();
        let mut jac = nalgebra::DMatrix::<f64>::zeros(m, 6);
        for j in 0..6 {
            let h = 1e-7;
            let mut e = SVector::<f64, 6>::zeros();
            e[j] = h;
            let (Some(rp), Some(rm)) = (
                reprojection(&apply(&pose, &e), corr, k),
                reprojection(&apply(&pose, &(-e)), corr, k),
            ) else {
                return pose;
            };
            for i in 0..m {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let r = nalgebra::DVector::from_vec(res.clone());
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * r;
        let mut accepted = false;
        for _ in 0..10 {
            let mut a = jtj.clone();
            for i in 0..6 {
                a[(i, i)] *= 1.0 + lambda;
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = -chol.solve(&jtr);
            let d = SVector::<f64, 6>::from_iterator(step.iter().copied());
            let cand = apply(&pose, &d);
            if let Some(rn) = reprojection(&cand, corr, k) {
                let c = sq(&rn);
                if c < cost {
                    pose = cand;
                    res = rn;
                    cost = c;
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    pose
}
