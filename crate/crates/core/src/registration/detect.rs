use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{Descriptor, Feature, Keypoint, RegistrationError};
use crate::image::{gaussian_blur, ImageBuffer};

/// Detector / descriptor settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorConfig {
    pub max_features: usize,
    pub levels: usize,
    /// Downsampling factor between pyramid levels.
    pub scale_factor: f64,
    /// FAST intensity threshold (luminance levels).
    pub fast_threshold: f32,
    /// Spatial bucket size (level pixels) used to spread keypoints.
    pub bucket_px: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            max_features: 1500,
            levels: 4,
            scale_factor: std::f64::consts::SQRT_2,
            fast_threshold: 8.0,
            bucket_px: 32,
        }
    }
}

const PATCH_RADIUS: i32 = 24;
const MARGIN: usize = 27;
const MIN_FEATURES: usize = 8;

/// Single-channel float raster.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn from_rgb(img: &ImageBuffer) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.luminance(),
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    fn bilinear(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = (x as usize).min(self.width.saturating_sub(2));
        let y0 = (y as usize).min(self.height.saturating_sub(2));
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let i = y0 * self.width + x0;
        let d = &self.data;
        let top = d[i] * (1.0 - fx) + d[i + 1] * fx;
        let bot = d[i + self.width] * (1.0 - fx) + d[i + self.width + 1] * fx;
        top * (1.0 - fy) + bot * fy
    }

    fn blurred(&self, sigma: f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: gaussian_blur(&self.data, self.width, self.height, sigma),
        }
    }

    /// Resamples by `1/s` keeping pixel-center alignment:
    /// output `u` reads input `(u + 0.5) s - 0.5`.
    fn downsample(&self, s: f64) -> Option<Self> {
        let w = (self.width as f64 / s).floor() as usize;
        let h = (self.height as f64 / s).floor() as usize;
        if w < 2 * MARGIN + 4 || h < 2 * MARGIN + 4 {
            return None;
        }
        let smooth = self.blurred((0.5 * (s * s - 1.0).sqrt()).max(0.3) as f32);
        let mut data = vec![0f32; w * h];
        data.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
            let sy = ((v as f64 + 0.5) * s - 0.5) as f32;
            for (u, o) in row.iter_mut().enumerate() {
                let sx = ((u as f64 + 0.5) * s - 0.5) as f32;
                *o = smooth.bilinear(sx, sy);
            }
        });
        Some(Self {
            width: w,
            height: h,
            data,
        })
    }
}

/// Bresenham circle of radius 3 used by the FAST segment test.
const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

fn fast9(img: &GrayImage, x: usize, y: usize, t: f32) -> bool {
    let c = img.at(x, y);
    let px = |k: usize| {
        let (dx, dy) = CIRCLE[k];
        img.at((x as i32 + dx) as usize, (y as i32 + dy) as usize)
    };
    // any 9-arc contains at least two of the compass points
    let compass = [px(0), px(4), px(8), px(12)];
    let bright = compass.iter().filter(|&&v| v > c + t).count();
    let dark = compass.iter().filter(|&&v| v < c - t).count();
    if bright < 2 && dark < 2 {
        return false;
    }
    let vals: [f32; 16] = std::array::from_fn(px);
    for sign in [1.0f32, -1.0] {
        let mut run = 0;
        for k in 0..32 {
            if sign * (vals[k % 16] - c) > t {
                run += 1;
                if run >= 9 {
                    return true;
                }
            } else {
                run = 0;
            }
        }
    }
    false
}

/// Minimum eigenvalue of the Gaussian-weighted structure tensor.
fn shi_tomasi(img: &GrayImage) -> Vec<f32> {
    let (w, h) = (img.width, img.height);
    let mut ixx = vec![0f32; w * h];
    let mut iyy = vec![0f32; w * h];
    let mut ixy = vec![0f32; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = 0.5 * (img.at(x + 1, y) - img.at(x - 1, y));
            let gy = 0.5 * (img.at(x, y + 1) - img.at(x, y - 1));
            let i = y * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let a = gaussian_blur(&ixx, w, h, 1.5);
    let c = gaussian_blur(&iyy, w, h, 1.5);
    let b = gaussian_blur(&ixy, w, h, 1.5);
    a.iter()
        .zip(&c)
        .zip(&b)
        .map(|((a, c), b)| {
            let m = 0.5 * (a + c);
            let d = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            m - d
        })
        .collect()
}

struct Level {
    detect: GrayImage,
    describe: GrayImage,
    scale: f64,
}

fn build_pyramid(base: &GrayImage, cfg: &DetectorConfig) -> Vec<Level> {
    let mut raw = vec![base.clone()];
    while raw.len() < cfg.levels.max(1) {
        match raw.last().unwrap().downsample(cfg.scale_factor) {
            Some(next) => raw.push(next),
            None => break,
        }
    }
    raw.into_par_iter()
        .enumerate()
        .map(|(l, img)| Level {
            detect: img.blurred(1.0),
            describe: img.blurred(2.0),
            scale: cfg.scale_factor.powi(l as i32),
        })
        .collect()
}

struct Candidate {
    x: f64,
    y: f64,
    response: f32,
}

fn detect_level(level: &Level, cfg: &DetectorConfig, budget: usize) -> Vec<Candidate> {
    let img = &level.detect;
    let (w, h) = (img.width, img.height);
    if w <= 2 * MARGIN || h <= 2 * MARGIN || budget == 0 {
        return Vec::new();
    }
    let score = shi_tomasi(img);
    let rows: Vec<Vec<Candidate>> = (MARGIN..h - MARGIN)
        .into_par_iter()
        .map(|y| {
            let mut out = Vec::new();
            for x in MARGIN..w - MARGIN {
                let s = score[y * w + x];
                if s <= 1e-3 {
                    continue;
                }
                let mut is_max = true;
                'nms: for dy in -2i32..=2 {
                    for dx in -2i32..=2 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let n = score[(y as i32 + dy) as usize * w + (x as i32 + dx) as usize];
                        // ties broken toward the earlier pixel
                        if n > s || (n == s && (dy < 0 || (dy == 0 && dx < 0))) {
                            is_max = false;
                            break 'nms;
                        }
                    }
                }
                if !is_max || !fast9(img, x, y, cfg.fast_threshold) {
                    continue;
                }
                let sub = |m: f32, c: f32, p: f32| {
                    let denom = m - 2.0 * c + p;
                    if denom.abs() < 1e-12 {
                        0.0
                    } else {
                        (0.5 * (m - p) / denom).clamp(-0.5, 0.5) as f64
                    }
                };
                let ox = sub(score[y * w + x - 1], s, score[y * w + x + 1]);
                let oy = sub(score[(y - 1) * w + x], s, score[(y + 1) * w + x]);
                out.push(Candidate {
                    x: x as f64 + ox,
                    y: y as f64 + oy,
                    response: s,
                });
            }
            out
        })
        .collect();
    let mut cands: Vec<Candidate> = rows.into_iter().flatten().collect();
    cands.sort_by(|a, b| b.response.total_cmp(&a.response));
    if cands.len() <= budget {
        return cands;
    }
    // spread: fill buckets round-robin by rank before taking leftovers
    let bw = w.div_ceil(cfg.bucket_px);
    let bh = h.div_ceil(cfg.bucket_px);
    let per_bucket = (budget / (bw * bh)).max(1);
    let mut counts = vec![0usize; bw * bh];
    let mut taken = vec![false; cands.len()];
    let mut kept = Vec::with_capacity(budget);
    for (i, c) in cands.iter().enumerate() {
        let b = (c.y as usize / cfg.bucket_px) * bw + c.x as usize / cfg.bucket_px;
        if counts[b] < per_bucket {
            counts[b] += 1;
            taken[i] = true;
            kept.push(i);
            if kept.len() == budget {
                break;
            }
        }
    }
    for (i, t) in taken.iter().enumerate() {
        if kept.len() >= budget {
            break;
        }
        if !t {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    let mut out = Vec::with_capacity(kept.len());
    let mut cands: Vec<Option<Candidate>> = cands.into_iter().map(Some).collect();
    for i in kept {
        out.push(cands[i].take().unwrap());
    }
    out
}

fn disk_offsets() -> &'static [(i32, i32)] {
    static DISK: OnceLock<Vec<(i32, i32)>> = OnceLock::new();
    DISK.get_or_init(|| {
        let mut v = Vec::new();
        for dy in -PATCH_RADIUS..=PATCH_RADIUS {
            for dx in -PATCH_RADIUS..=PATCH_RADIUS {
                if dx * dx + dy * dy <= PATCH_RADIUS * PATCH_RADIUS {
                    v.push((dx, dy));
                }
            }
        }
        v
    })
}

/// 256 point pairs drawn from an isotropic Gaussian inside the patch disk.
fn test_pairs() -> &'static [[(f32, f32); 2]; 256] {
    static PAIRS: OnceLock<[[(f32, f32); 2]; 256]> = OnceLock::new();
    PAIRS.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0xB121EF);
        let normal = Normal::new(0.0f32, (2 * PATCH_RADIUS + 1) as f32 / 5.0).unwrap();
        let r2 = (PATCH_RADIUS * PATCH_RADIUS) as f32;
        let draw = |rng: &mut ChaCha8Rng| loop {
            let p = (normal.sample(rng), normal.sample(rng));
            if p.0 * p.0 + p.1 * p.1 <= r2 {
                return p;
            }
        };
        let mut pairs = [[(0.0, 0.0); 2]; 256];
        for pair in pairs.iter_mut() {
            loop {
                let a = draw(&mut rng);
                let b = draw(&mut rng);
                if (a.0 - b.0).abs() + (a.1 - b.1).abs() > 1.0 {
                    *pair = [a, b];
                    break;
                }
            }
            // decorrelate the stream across pairs
            let _: u32 = rng.random();
        }
        pairs
    })
}

fn orientation(img: &GrayImage, x: f64, y: f64) -> f64 {
    let cx = x.round() as i32;
    let cy = y.round() as i32;
    let (mut m10, mut m01) = (0f64, 0f64);
    for &(dx, dy) in disk_offsets() {
        let v = img.at((cx + dx) as usize, (cy + dy) as usize) as f64;
        m10 += dx as f64 * v;
        m01 += dy as f64 * v;
    }
    m01.atan2(m10)
}

fn describe(img: &GrayImage, x: f64, y: f64, angle: f64) -> Descriptor {
    let (s, c) = (angle.sin() as f32, angle.cos() as f32);
    let (x, y) = (x as f32, y as f32);
    let rot = |p: (f32, f32)| (x + c * p.0 - s * p.1, y + s * p.0 + c * p.1);
    let mut bits = [0u64; 4];
    for (i, [a, b]) in test_pairs().iter().enumerate() {
        let (ax, ay) = rot(*a);
        let (bx, by) = rot(*b);
        if img.bilinear(ax, ay) < img.bilinear(bx, by) {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    Descriptor(bits)
}

/// Detects keypoints and computes descriptors, sorted by response
/// (descending). Deterministic for identical input.
pub fn detect_and_describe(
    img: &ImageBuffer,
    cfg: &DetectorConfig,
) -> Result<Vec<Feature>, RegistrationError> {
    detect_and_describe_gray(&GrayImage::from_rgb(img), cfg)
}

pub fn detect_and_describe_gray(
    gray: &GrayImage,
    cfg: &DetectorConfig,
) -> Result<Vec<Feature>, RegistrationError> {
    if gray.width < 64 || gray.height < 64 {
        return Err(RegistrationError::TooFewFeatures(0));
    }
    let pyramid = build_pyramid(gray, cfg);
    let inv_area: Vec<f64> = pyramid.iter().map(|l| 1.0 / (l.scale * l.scale)).collect();
    let total: f64 = inv_area.iter().sum();
    let budgets: Vec<usize> = inv_area
        .iter()
        .map(|a| ((cfg.max_features as f64) * a / total).ceil() as usize)
        .collect();
    let per_level: Vec<Vec<Feature>> = pyramid
        .par_iter()
        .zip(budgets.par_iter())
        .enumerate()
        .map(|(l, (level, &budget))| {
            detect_level(level, cfg, budget)
                .into_iter()
                .map(|c| {
                    let angle = orientation(&level.detect, c.x, c.y);
                    let descriptor = describe(&level.describe, c.x, c.y, angle);
                    Feature {
                        keypoint: Keypoint {
                            x: (c.x + 0.5) * level.scale - 0.5,
                            y: (c.y + 0.5) * level.scale - 0.5,
                            scale: (2 * PATCH_RADIUS + 1) as f64 * level.scale,
                            orientation: angle,
                            response: c.response as f64,
                            level: l as u8,
                        },
                        descriptor,
                    }
                })
                .collect()
        })
        .collect();
    let mut feats: Vec<Feature> = per_level.into_iter().flatten().collect();
    feats.sort_by(|a, b| {
        b.keypoint
            .response
            .total_cmp(&a.keypoint.response)
            .then(a.keypoint.level.cmp(&b.keypoint.level))
            .then(a.keypoint.y.total_cmp(&b.keypoint.y))
            .then(a.keypoint.x.total_cmp(&b.keypoint.x))
    });
    feats.truncate(cfg.max_features);
    if feats.len() < MIN_FEATURES {
        return Err(RegistrationError::TooFewFeatures(feats.len()));
    }
    Ok(feats)
}
