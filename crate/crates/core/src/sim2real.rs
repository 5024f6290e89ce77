//! One-time calibration of the fixed offsets between the simulated and the
//! real frames: `M ≈ U · N · V`, with `U` acting on the world side and `V`
//! on the probe side.
//!
//! The per-pair loss `‖t_m − t_n‖ + ζ·angle(R_m, R_n)` is a sum of norms
//! rather than squares, so the solver is Levenberg–Marquardt on an
//! iteratively reweighted least-squares model of it: each step linearizes
//! the 6-vector residual of every pair and weights its translation and
//! rotation halves by the inverse of their current norms. Steps are accepted
//! only if the true loss decreases.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, PoseRecord};

pub const DEFAULT_ZETA: f64 = 0.1;

const MAX_ITER: usize = 200;
const STEP_TOL: f64 = 1e-10;
const MAX_STALL: usize = 20;
/// Minimum second singular value (radians) of the relative estimate
/// rotations for `U` and `V` to be separable.
const MIN_ROTATION_SPREAD: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum Sim2RealError {
    #[error("degenerate calibration set: {0}")]
    DegenerateSet(String),
    #[error("calibration did not converge: {0}")]
    NonConvergence(String),
    #[error("invalid calibration file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationPair {
    /// Ground truth.
    pub m: Pose,
    /// Pipeline estimate.
    pub n: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim2RealCorrection {
    pub u: Pose,
    pub v: Pose,
    pub loss: f64,
    pub pairs: usize,
    pub zeta: f64,
}

impl Sim2RealCorrection {
    pub fn identity() -> Self {
        Self {
            u: Pose::identity(),
            v: Pose::identity(),
            loss: 0.0,
            pairs: 0,
            zeta: DEFAULT_ZETA,
        }
    }

    /// The correction undoing this one.
    pub fn inverse(&self) -> Self {
        Self {
            u: self.u.inverse(),
            v: self.v.inverse(),
            ..*self
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Sim2RealError> {
        let file = CorrectionFile::from(self);
        let text = serde_json::to_string_pretty(&file).expect("plain data serializes");
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Sim2RealError> {
        let text = std::fs::read_to_string(path)?;
        let file: CorrectionFile =
            serde_json::from_str(&text).map_err(|e| Sim2RealError::Format(e.to_string()))?;
        file.try_into()
    }
}

/// On-disk form of a correction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrectionFile {
    pub u: PoseRecord,
    pub v: PoseRecord,
    pub zeta: f64,
    pub loss: f64,
    pub pairs: usize,
}

impl From<&Sim2RealCorrection> for CorrectionFile {
    fn from(c: &Sim2RealCorrection) -> Self {
        Self {
            u: PoseRecord::from(&c.u),
            v: PoseRecord::from(&c.v),
            zeta: c.zeta,
            loss: c.loss,
            pairs: c.pairs,
        }
    }
}

impl TryFrom<CorrectionFile> for Sim2RealCorrection {
    type Error = Sim2RealError;
    fn try_from(f: CorrectionFile) -> Result<Self, Sim2RealError> {
        if !(f.loss >= 0.0) || !(f.zeta >= 0.0) {
            return Err(Sim2RealError::Format("loss and zeta must be >= 0".into()));
        }
        Ok(Self {
            u: Pose::try_from(f.u).map_err(Sim2RealError::Format)?,
            v: Pose::try_from(f.v).map_err(Sim2RealError::Format)?,
            loss: f.loss,
            pairs: f.pairs,
            zeta: f.zeta,
        })
    }
}

/// `U ∘ estimate ∘ V`.
pub fn apply_correction(c: &Sim2RealCorrection, estimate: &Pose) -> Pose {
    c.u * *estimate * c.v
}

/// Loss of one pair: translation distance plus `ζ` times the geodesic angle,
/// the latter as `arccos((tr(R_mᵀR_n) − 1) / 2)` with the argument clamped.
pub fn pair_loss(m: &Pose, n: &Pose, zeta: f64) -> f64 {
    let dt = (m.translation - n.translation).norm();
    let r = m.rotation.matrix().transpose() * n.rotation.matrix();
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    // arccos is ill-conditioned near zero; the equivalent quaternion angle
    // takes over there
    let angle = if c > 0.999 {
        m.rotation.angle_to(&n.rotation)
    } else {
        c.acos()
    };
    dt + zeta * angle
}

pub fn total_loss(pairs: &[CalibrationPair], u: &Pose, v: &Pose, zeta: f64) -> f64 {
    pairs
        .iter()
        .map(|p| pair_loss(&p.m, &(*u * p.n * *v), zeta))
        .sum()
}

fn check_diversity(pairs: &[CalibrationPair]) -> Result<(), Sim2RealError> {
    if pairs.len() < 4 {
        return Err(Sim2RealError::DegenerateSet(format!(
            "need >= 4 pairs, got {}",
            pairs.len()
        )));
    }
    let r0 = pairs[0].n.rotation.inverse();
    let mut a = DMatrix::<f64>::zeros(pairs.len(), 3);
    for (i, p) in pairs.iter().enumerate() {
        let w = (r0 * p.n.rotation).axis_angle();
        a.row_mut(i).copy_from(&w.transpose());
    }
    let mut s = a.svd(false, false).singular_values.as_slice().to_vec();
    s.sort_by(|x, y| y.total_cmp(x));
    if s[1] < MIN_ROTATION_SPREAD {
        return Err(Sim2RealError::DegenerateSet(format!(
            "estimate rotations span fewer than two axes (spread {:.2e} rad)",
            s[1]
        )));
    }
    Ok(())
}

/// Applies the 12-vector increment: `U ← exp(δu)·U`, `V ← V·exp(δv)`.
fn perturb(u: &Pose, v: &Pose, d: &[f64]) -> (Pose, Pose) {
    let du = Pose::exp(&Vector3::new(d[0], d[1], d[2]), &Vector3::new(d[3], d[4], d[5]));
    let dv = Pose::exp(&Vector3::new(d[6], d[7], d[8]), &Vector3::new(d[9], d[10], d[11]));
    (du * *u, *v * dv)
}

fn residuals(pairs: &[CalibrationPair], u: &Pose, v: &Pose) -> Vec<[Vector3<f64>; 2]> {
    pairs
        .iter()
        .map(|p| {
            let pred = *u * p.n * *v;
            [
                pred.translation - p.m.translation,
                (p.m.rotation.inverse() * pred.rotation).axis_angle(),
            ]
        })
        .collect()
}

pub fn calibrate(pairs: &[CalibrationPair], zeta: f64) -> Result<Sim2RealCorrection, Sim2RealError> {
    if !(zeta >= 0.0) || !zeta.is_finite() {
        return Err(Sim2RealError::DegenerateSet(format!("invalid zeta {zeta}")));
    }
    check_diversity(pairs)?;
    let n = pairs.len();
    let mut u = Pose::identity();
    let mut v = Pose::identity();
    let mut loss = total_loss(pairs, &u, &v, zeta);
    let mut lambda = 1e-3;
    let mut stall = 0;
    let h = 1e-7;
    for _ in 0..MAX_ITER {
        if loss < 1e-14 {
            break;
        }
        let r0 = residuals(pairs, &u, &v);
        // IRLS weights: ‖a‖ ≈ ‖a‖² / ‖a₀‖ around the current point.
        let floor = 1e-9;
        let weights: Vec<[f64; 2]> = r0
            .iter()
            .map(|[a, b]| {
                [
                    1.0 / a.norm().max(floor),
                    zeta / b.norm().max(floor),
                ]
            })
            .collect();
        let flat = |r: &[[Vector3<f64>; 2]]| -> DVector<f64> {
            let mut out = DVector::zeros(6 * n);
            for (i, (pair, w)) in r.iter().zip(&weights).enumerate() {
                for k in 0..3 {
                    out[6 * i + k] = pair[0][k] * w[0].sqrt();
                    out[6 * i + 3 + k] = pair[1][k] * w[1].sqrt();
                }
            }
            out
        };
        let f0 = flat(&r0);
        let mut jac = DMatrix::<f64>::zeros(6 * n, 12);
        for j in 0..12 {
            let mut d = [0.0; 12];
            d[j] = h;
            let (up, vp) = perturb(&u, &v, &d);
            let fj = flat(&residuals(pairs, &up, &vp));
            jac.set_column(j, &((fj - &f0) / h));
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &f0;
        let mut accepted = false;
        let mut small_step = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for i in 0..12 {
                a[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let (un, vn) = perturb(&u, &v, step.as_slice());
            let new_loss = total_loss(pairs, &un, &vn, zeta);
            if step.norm() < STEP_TOL {
                small_step = true;
            }
            if new_loss < loss {
                u = un;
                v = vn;
                loss = new_loss;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
            stall += 1;
            if small_step || stall >= MAX_STALL {
                break;
            }
        }
        if accepted {
            stall = 0;
        }
        if small_step {
            break;
        }
        if stall >= MAX_STALL {
            return Err(Sim2RealError::NonConvergence(format!(
                "loss stuck at {loss:.3e} for {MAX_STALL} iterations"
            )));
        }
    }
    Ok(Sim2RealCorrection {
        u,
        v,
        loss,
        pairs: n,
        zeta,
    })
}

#[cfg(test)]
mod tests;
