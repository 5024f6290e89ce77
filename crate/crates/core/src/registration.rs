//! Feature-based planar registration.
//!
//! Detection runs over an image pyramid: FAST-9 segment tests pick corner
//! candidates, which are scored by the minimum eigenvalue of the local
//! structure tensor, non-max suppressed and refined to sub-pixel accuracy.
//! Each keypoint gets an intensity-centroid orientation and a 256-bit
//! steered binary descriptor. Matching is exhaustive Hamming search with a
//! mutual cross-check and a two-sided ratio test; homographies come from
//! RANSAC over normalized-DLT minimal samples.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

mod detect;

pub use detect::{detect_and_describe, DetectorConfig, GrayImage};

#[derive(Debug, thiserror::Error)]
pub enum RegistrationError {
    #[error("too few features ({0} keypoints)")]
    TooFewFeatures(usize),
    #[error("no matches survived filtering")]
    NoMatches,
    #[error("homography estimation failed: {0}")]
    EstimationFailed(String),
    #[error("need at least 4 correspondences, got {0}")]
    InsufficientMatches(usize),
    #[error("invalid homography: {0}")]
    InvalidHomography(String),
}

/// Detected interest point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Sub-pixel position in base-image pixels.
    pub x: f64,
    pub y: f64,
    /// Descriptor patch diameter in base-image pixels.
    pub scale: f64,
    /// Radians.
    pub orientation: f64,
    pub response: f64,
    pub level: u8,
}

/// 256-bit binary descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    #[inline]
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        (self.0[0] ^ other.0[0]).count_ones()
            + (self.0[1] ^ other.0[1]).count_ones()
            + (self.0[2] ^ other.0[2]).count_ones()
            + (self.0[3] ^ other.0[3]).count_ones()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: Descriptor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub src: usize,
    pub dst: usize,
    pub distance: u32,
}

/// One-to-one matches between two feature lists.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchSet {
    pub src_frame: String,
    pub dst_frame: String,
    pub pairs: Vec<Match>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchConfig {
    /// Best / second-best distance must be strictly below this.
    pub ratio: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { ratio: 0.8 }
    }
}

struct Nearest {
    best: u32,
    second: u32,
    index: usize,
}

fn nearest(d: &Descriptor, pool: &[Feature]) -> Nearest {
    let mut n = Nearest {
        best: u32::MAX,
        second: u32::MAX,
        index: usize::MAX,
    };
    for (j, f) in pool.iter().enumerate() {
        let dist = d.hamming(&f.descriptor);
        if dist < n.best {
            n.second = n.best;
            n.best = dist;
            n.index = j;
        } else if dist < n.second {
            n.second = dist;
        }
    }
    n
}

fn passes_ratio(n: &Nearest, ratio: f64) -> bool {
    if n.second == u32::MAX {
        return true;
    }
    (n.best as f64) < ratio * n.second as f64
}

/// Brute-force Hamming matching with mutual cross-check and a ratio test in
/// both directions, so the result is symmetric in `a` and `b`.
pub fn match_features(
    a: &[Feature],
    b: &[Feature],
    cfg: &MatchConfig,
) -> Result<MatchSet, RegistrationError> {
    match_features_tagged(a, b, cfg, "src", "dst")
}

pub fn match_features_tagged(
    a: &[Feature],
    b: &[Feature],
    cfg: &MatchConfig,
    src_frame: &str,
    dst_frame: &str,
) -> Result<MatchSet, RegistrationError> {
    if a.is_empty() || b.is_empty() {
        return Err(RegistrationError::NoMatches);
    }
    let forward: Vec<Nearest> = a.par_iter().map(|f| nearest(&f.descriptor, b)).collect();
    let pairs: Vec<Match> = forward
        .par_iter()
        .enumerate()
        .filter_map(|(i, fw)| {
            if !passes_ratio(fw, cfg.ratio) {
                return None;
            }
            let back = nearest(&b[fw.index].descriptor, a);
            (back.index == i && passes_ratio(&back, cfg.ratio)).then_some(Match {
                src: i,
                dst: fw.index,
                distance: fw.best,
            })
        })
        .collect();
    if pairs.is_empty() {
        return Err(RegistrationError::NoMatches);
    }
    Ok(MatchSet {
        src_frame: src_frame.into(),
        dst_frame: dst_frame.into(),
        pairs,
    })
}

/// Projective map between two image frames, normalized to `H[2,2] = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
    pub src_frame: String,
    pub dst_frame: String,
    pub inlier_count: usize,
    pub inlier_ratio: f64,
}

impl Homography {
    pub fn new(
        m: Matrix3<f64>,
        src_frame: &str,
        dst_frame: &str,
    ) -> Result<Self, RegistrationError> {
        if src_frame == dst_frame {
            return Err(RegistrationError::InvalidHomography(
                "source and destination frames must differ".into(),
            ));
        }
        let h22 = m[(2, 2)];
        if !h22.is_finite() || h22.abs() < 1e-15 {
            return Err(RegistrationError::InvalidHomography("H[2,2] is zero".into()));
        }
        let matrix = m / h22;
        let det = matrix.determinant();
        if !det.is_finite() || det.abs() <= 1e-12 {
            return Err(RegistrationError::InvalidHomography(format!(
                "singular (det = {det:e})"
            )));
        }
        Ok(Self {
            matrix,
            src_frame: src_frame.into(),
            dst_frame: dst_frame.into(),
            inlier_count: 0,
            inlier_ratio: 0.0,
        })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn transfer(&self, p: &Vector2<f64>) -> Vector2<f64> {
        transfer(&self.matrix, p)
    }

    pub fn inverse(&self) -> Homography {
        let inv = self.matrix.try_inverse().expect("checked non-singular");
        Homography {
            matrix: inv / inv[(2, 2)],
            src_frame: self.dst_frame.clone(),
            dst_frame: self.src_frame.clone(),
            inlier_count: self.inlier_count,
            inlier_ratio: self.inlier_ratio,
        }
    }

    /// `other ∘ self`: maps `self.src` to `other.dst`.
    pub fn then(&self, other: &Homography) -> Result<Homography, RegistrationError> {
        let mut h = Homography::new(other.matrix * self.matrix, &self.src_frame, &other.dst_frame)?;
        h.inlier_count = other.inlier_count;
        h.inlier_ratio = other.inlier_ratio;
        Ok(h)
    }
}

#[inline]
pub fn transfer(h: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let q = h * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(q.x / q.z, q.y / q.z)
}

/// A point correspondence `src -> dst` in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub src: Vector2<f64>,
    pub dst: Vector2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacConfig {
    /// Forward reprojection error threshold, pixels.
    pub threshold: f64,
    pub confidence: f64,
    pub max_iterations: usize,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 3.0,
            confidence: 0.995,
            max_iterations: 2000,
            min_inliers: 12,
            seed: 0x5EED,
        }
    }
}

/// Robust fit result with the per-correspondence inlier flags.
#[derive(Clone, Debug, PartialEq)]
pub struct HomographyFit {
    pub homography: Homography,
    pub inliers: Vec<bool>,
}

/// Hartley normalization: centroid to origin, mean distance √2.
fn normalizing_transform(pts: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

/// Normalized direct linear transform over `>= 4` correspondences.
pub fn dlt_homography(corr: &[Correspondence]) -> Option<Matrix3<f64>> {
    if corr.len() < 4 {
        return None;
    }
    let src: Vec<_> = corr.iter().map(|c| c.src).collect();
    let dst: Vec<_> = corr.iter().map(|c| c.dst).collect();
    let ts = normalizing_transform(&src);
    let td = normalizing_transform(&dst);
    let rows = (2 * corr.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, c) in corr.iter().enumerate() {
        let s = ts * Vector3::new(c.src.x, c.src.y, 1.0);
        let d = td * Vector3::new(c.dst.x, c.dst.y, 1.0);
        let (x, y) = (s.x, s.y);
        let (u, v) = (d.x, d.y);
        let r0 = 2 * i;
        let r1 = r0 + 1;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))?;
    let h = v_t.row(min_idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let m = td.try_inverse()? * hn * ts;
    if !m.iter().all(|v| v.is_finite()) || m[(2, 2)].abs() < 1e-15 {
        return None;
    }
    let m = m / m[(2, 2)];
    (m.determinant().abs() > 1e-12).then_some(m)
}

fn reprojection_error(h: &Matrix3<f64>, c: &Correspondence) -> f64 {
    let q = h * Vector3::new(c.src.x, c.src.y, 1.0);
    if q.z.abs() < 1e-12 {
        return f64::INFINITY;
    }
    ((q.x / q.z - c.dst.x).powi(2) + (q.y / q.z - c.dst.y).powi(2)).sqrt()
}

fn inlier_mask(h: &Matrix3<f64>, corr: &[Correspondence], threshold: f64) -> Vec<bool> {
    corr.iter()
        .map(|c| reprojection_error(h, c) <= threshold)
        .collect()
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn sample_is_degenerate(pts: &[Vector2<f64>; 4]) -> bool {
    for i in 0..4 {
        for j in (i + 1)..4 {
            for k in (j + 1)..4 {
                if cross(&pts[i], &pts[j], &pts[k]).abs() < 1e-6 {
                    return true;
                }
            }
        }
    }
    false
}

/// RANSAC over 4-point normalized-DLT hypotheses, followed by re-fitting on
/// the consensus set until it stops changing. Reported inliers are exactly
/// the correspondences within the threshold of the returned model.
pub fn estimate_homography_fit(
    corr: &[Correspondence],
    cfg: &RansacConfig,
    src_frame: &str,
    dst_frame: &str,
) -> Result<HomographyFit, RegistrationError> {
    let n = corr.len();
    if n < 4 {
        return Err(RegistrationError::InsufficientMatches(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Matrix3<f64>)> = None;
    let mut needed = cfg.max_iterations;
    let mut iter = 0;
    while iter < needed.min(cfg.max_iterations) {
        iter += 1;
        let idx = sample(&mut rng, n, 4);
        let sample_corr: [Correspondence; 4] = std::array::from_fn(|i| corr[idx.index(i)]);
        let src_pts = sample_corr.map(|c| c.src);
        let dst_pts = sample_corr.map(|c| c.dst);
        if sample_is_degenerate(&src_pts) || sample_is_degenerate(&dst_pts) {
            continue;
        }
        let Some(h) = dlt_homography(&sample_corr) else {
            continue;
        };
        let count = corr
            .iter()
            .filter(|c| reprojection_error(&h, c) <= cfg.threshold)
            .count();
        if best.as_ref().is_none_or(|(b, _)| count > *b) {
            best = Some((count, h));
            let w = count as f64 / n as f64;
            let denom = (1.0 - w.powi(4)).ln();
            needed = if denom < 0.0 {
                ((1.0 - cfg.confidence).ln() / denom).ceil().max(1.0) as usize
            } else {
                cfg.max_iterations
            };
        }
    }
    let Some((count, mut h)) = best else {
        return Err(RegistrationError::EstimationFailed(
            "no non-degenerate sample".into(),
        ));
    };
    if count < cfg.min_inliers {
        return Err(RegistrationError::EstimationFailed(format!(
            "best consensus {count} < {}",
            cfg.min_inliers
        )));
    }
    // The winning minimal-sample model only selects the consensus set; the
    // reported model is always the least-squares refit on that set,
    // iterated while the set changes.
    let mut mask = inlier_mask(&h, corr, cfg.threshold);
    for _ in 0..5 {
        let inl: Vec<Correspondence> = corr
            .iter()
            .zip(&mask)
            .filter(|(_, m)| **m)
            .map(|(c, _)| *c)
            .collect();
        let Some(refit) = dlt_homography(&inl) else {
            break;
        };
        h = refit;
        let new_mask = inlier_mask(&h, corr, cfg.threshold);
        let unchanged = new_mask == mask;
        mask = new_mask;
        if unchanged {
            break;
        }
    }
    let inlier_count = mask.iter().filter(|m| **m).count();
    if inlier_count < cfg.min_inliers {
        return Err(RegistrationError::EstimationFailed(format!(
            "final consensus {inlier_count} < {}",
            cfg.min_inliers
        )));
    }
    let mut homography = Homography::new(h, src_frame, dst_frame)
        .map_err(|e| RegistrationError::EstimationFailed(e.to_string()))?;
    homography.inlier_count = inlier_count;
    homography.inlier_ratio = inlier_count as f64 / n as f64;
    Ok(HomographyFit {
        homography,
        inliers: mask,
    })
}

pub fn estimate_homography(
    corr: &[Correspondence],
    cfg: &RansacConfig,
) -> Result<Homography, RegistrationError> {
    estimate_homography_fit(corr, cfg, "src", "dst").map(|f| f.homography)
}

/// Correspondences for a match set between two feature lists.
pub fn correspondences(m: &MatchSet, src: &[Feature], dst: &[Feature]) -> Vec<Correspondence> {
    m.pairs
        .iter()
        .map(|p| Correspondence {
            src: Vector2::new(src[p.src].keypoint.x, src[p.src].keypoint.y),
            dst: Vector2::new(dst[p.dst].keypoint.x, dst[p.dst].keypoint.y),
        })
        .collect()
}

/// Full registration settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegistrationConfig {
    pub matching: MatchConfig,
    pub ransac: RansacConfig,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            matching: MatchConfig::default(),
            ransac: RansacConfig::default(),
        }
    }
}

/// Outcome of matching + robust fitting, kept for debug dumps.
#[derive(Clone, Debug)]
pub struct Registration {
    pub matches: MatchSet,
    pub fit: HomographyFit,
}

/// Matches `src` against `dst` and fits the homography `src -> dst`.
pub fn register(
    src: &[Feature],
    dst: &[Feature],
    cfg: &RegistrationConfig,
    src_frame: &str,
    dst_frame: &str,
) -> Result<Registration, RegistrationError> {
    let matches = match_features_tagged(src, dst, &cfg.matching, src_frame, dst_frame)?;
    let corr = correspondences(&matches, src, dst);
    let fit = estimate_homography_fit(&corr, &cfg.ransac, src_frame, dst_frame)?;
    Ok(Registration { matches, fit })
}

/// JSON debug dump of a registration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatchDump {
    pub src_frame: String,
    pub dst_frame: String,
    pub homography: [[f64; 3]; 3],
    pub inlier_count: usize,
    pub matches: Vec<MatchDumpEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatchDumpEntry {
    pub src: [f64; 2],
    pub dst: [f64; 2],
    pub distance: u32,
    pub inlier: bool,
}

impl MatchDump {
    pub fn new(reg: &Registration, src: &[Feature], dst: &[Feature]) -> Self {
        let h = reg.fit.homography.matrix();
        Self {
            src_frame: reg.matches.src_frame.clone(),
            dst_frame: reg.matches.dst_frame.clone(),
            homography: std::array::from_fn(|r| std::array::from_fn(|c| h[(r, c)])),
            inlier_count: reg.fit.homography.inlier_count,
            matches: reg
                .matches
                .pairs
                .iter()
                .zip(&reg.fit.inliers)
                .map(|(m, inl)| MatchDumpEntry {
                    src: [src[m.src].keypoint.x, src[m.src].keypoint.y],
                    dst: [dst[m.dst].keypoint.x, dst[m.dst].keypoint.y],
                    distance: m.distance,
                    inlier: *inl,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests;
