//! RGB rasters, bilinear sampling, homography warps and the perturbation
//! injectors used to manufacture degraded observations.
//!
//! Pixel coordinates are continuous with integer values at pixel centers:
//! pixel `(x, y)` covers `[x - 0.5, x + 0.5] x [y - 0.5, y + 0.5]`.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub mod pattern;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("homography is singular (|det| = {0:e})")]
    SingularHomography(f64),
    #[error("invalid perturbation spec: {0}")]
    InvalidSpec(String),
    #[error("invalid dimensions {0}x{1}")]
    InvalidDimensions(usize, usize),
    #[error("png i/o: {0}")]
    Png(#[from] ::image::ImageError),
}

/// Row-major 8-bit RGB raster.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ImageBuffer({}x{})", self.width, self.height)
    }
}

impl ImageBuffer {
    /// Black image.
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(ImageError::InvalidDimensions(width, height));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image row-parallel from a per-pixel function.
    pub fn from_fn<F>(width: usize, height: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> [u8; 3] + Sync,
    {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        let mut data = vec![0u8; width * height * 3];
        data.par_chunks_mut(width * 3)
            .enumerate()
            .for_each(|(y, row)| {
                for x in 0..width {
                    row[x * 3..x * 3 + 3].copy_from_slice(&f(x, y));
                }
            });
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Bilinear sample at continuous coordinates; `None` outside
    /// `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let p00 = (y0 * self.width + x0) * 3;
        let p10 = (y0 * self.width + x1) * 3;
        let p01 = (y1 * self.width + x0) * 3;
        let p11 = (y1 * self.width + x1) * 3;
        let d = &self.data;
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let top = d[p00 + c] as f64 * (1.0 - fx) + d[p10 + c] as f64 * fx;
            let bot = d[p01 + c] as f64 * (1.0 - fx) + d[p11 + c] as f64 * fx;
            *o = top * (1.0 - fy) + bot * fy;
        }
        Some(out)
    }

    /// ITU-R BT.601 luminance in `[0, 255]`.
    pub fn luminance(&self) -> Vec<f32> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
            .collect()
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let img = ::image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::from_raw(w as usize, h as usize, img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        ::image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            ::image::ExtendedColorType::Rgb8,
        )?;
        Ok(())
    }

    /// Places `self` and `other` side by side (heights padded with black).
    pub fn side_by_side(&self, other: &ImageBuffer) -> ImageBuffer {
        let w = self.width + other.width;
        let h = self.height.max(other.height);
        ImageBuffer::from_fn(w, h, |x, y| {
            if x < self.width {
                if y < self.height {
                    self.get(x, y)
                } else {
                    [0, 0, 0]
                }
            } else if y < other.height {
                other.get(x - self.width, y)
            } else {
                [0, 0, 0]
            }
        })
    }
}

#[inline]
pub(crate) fn to_rgb(v: [f64; 3]) -> [u8; 3] {
    [
        v[0].round().clamp(0.0, 255.0) as u8,
        v[1].round().clamp(0.0, 255.0) as u8,
        v[2].round().clamp(0.0, 255.0) as u8,
    ]
}

/// Warps `src` through `h` (source pixel -> output pixel). Each output pixel
/// `p` takes the bilinear source value at `h⁻¹ p`; anything mapping outside
/// the source is black.
pub fn warp_homography(
    src: &ImageBuffer,
    h: &Matrix3<f64>,
    out_w: usize,
    out_h: usize,
) -> Result<ImageBuffer, ImageError> {
    let det = h.determinant();
    if !det.is_finite() || det.abs() <= 1e-12 {
        return Err(ImageError::SingularHomography(det));
    }
    let inv = h
        .try_inverse()
        .ok_or(ImageError::SingularHomography(det))?;
    Ok(ImageBuffer::from_fn(out_w, out_h, |x, y| {
        let q = inv * Vector3::new(x as f64, y as f64, 1.0);
        if q.z.abs() < 1e-12 {
            return [0, 0, 0];
        }
        src.sample_bilinear(q.x / q.z, q.y / q.z)
            .map(to_rgb)
            .unwrap_or([0, 0, 0])
    }))
}

/// Mask of output pixels that receive source content under `warp_homography`.
pub fn warp_coverage(
    src_w: usize,
    src_h: usize,
    h: &Matrix3<f64>,
    out_w: usize,
    out_h: usize,
) -> Vec<bool> {
    let Some(inv) = h.try_inverse() else {
        return vec![false; out_w * out_h];
    };
    let mut mask = vec![false; out_w * out_h];
    mask.par_chunks_mut(out_w).enumerate().for_each(|(y, row)| {
        for (x, m) in row.iter_mut().enumerate() {
            let q = inv * Vector3::new(x as f64, y as f64, 1.0);
            if q.z.abs() < 1e-12 {
                continue;
            }
            let (u, v) = (q.x / q.z, q.y / q.z);
            *m = u >= 0.0 && v >= 0.0 && u <= (src_w - 1) as f64 && v <= (src_h - 1) as f64;
        }
    });
    mask
}

/// Fill used inside an occlusion polygon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionFill {
    Constant([u8; 3]),
    /// Uniform random RGB per pixel.
    Noise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionSpec {
    /// Polygon vertices in pixel coordinates.
    pub vertices: Vec<[f64; 2]>,
    pub fill: OcclusionFill,
}

impl OcclusionSpec {
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut a = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            a += v[i][0] * v[j][1] - v[j][0] * v[i][1];
        }
        0.5 * a.abs()
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (xi, yi) = (v[i][0], v[i][1]);
            let (xj, yj) = (v[j][0], v[j][1]);
            if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64, fill: OcclusionFill) -> Self {
        Self {
            vertices: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
            fill,
        }
    }
}

/// Image degradations applied to synthetic observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    Occlusion(OcclusionSpec),
    /// Additive bright blob with quadratic falloff to zero at `radius`.
    Specular {
        center: [f64; 2],
        radius: f64,
        gain: f64,
    },
    /// Per-channel power law `255 * (v / 255)^gamma`.
    Gamma(f64),
    /// Additive i.i.d. Gaussian noise, clamped to `[0, 255]`.
    GaussianNoise(f64),
}

/// Applies one perturbation. Deterministic given `seed`; never changes
/// dimensions.
pub fn inject_perturbation(
    img: &ImageBuffer,
    kind: &Perturbation,
    seed: u64,
) -> Result<ImageBuffer, ImageError> {
    let (w, h) = (img.width, img.height);
    match kind {
        Perturbation::Occlusion(spec) => {
            if spec.vertices.len() < 3 || !(spec.area() > 0.0) {
                return Err(ImageError::InvalidSpec(
                    "occlusion polygon needs >= 3 vertices and positive area".into(),
                ));
            }
            let mut out = img.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for y in 0..h {
                for x in 0..w {
                    if spec.contains(x as f64, y as f64) {
                        let rgb = match spec.fill {
                            OcclusionFill::Constant(c) => c,
                            OcclusionFill::Noise => rng.random(),
                        };
                        out.set(x, y, rgb);
                    }
                }
            }
            Ok(out)
        }
        Perturbation::Specular {
            center,
            radius,
            gain,
        } => {
            if !(*radius > 0.0) || !gain.is_finite() {
                return Err(ImageError::InvalidSpec(
                    "specular radius must be positive".into(),
                ));
            }
            Ok(ImageBuffer::from_fn(w, h, |x, y| {
                let dx = x as f64 - center[0];
                let dy = y as f64 - center[1];
                let r2 = (dx * dx + dy * dy) / (radius * radius);
                let add = if r2 < 1.0 { gain * 255.0 * (1.0 - r2) } else { 0.0 };
                let p = img.get(x, y);
                to_rgb([p[0] as f64 + add, p[1] as f64 + add, p[2] as f64 + add])
            }))
        }
        Perturbation::Gamma(g) => {
            if !(*g > 0.0) || !g.is_finite() {
                return Err(ImageError::InvalidSpec("gamma must be positive".into()));
            }
            let lut: Vec<u8> = (0..256)
                .map(|v| (255.0 * (v as f64 / 255.0).powf(*g)).round().clamp(0.0, 255.0) as u8)
                .collect();
            let data = img.data.iter().map(|&v| lut[v as usize]).collect();
            Ok(ImageBuffer {
                width: w,
                height: h,
                data,
            })
        }
        Perturbation::GaussianNoise(sigma) => {
            if !(*sigma >= 0.0) || !sigma.is_finite() {
                return Err(ImageError::InvalidSpec("noise sigma must be >= 0".into()));
            }
            if *sigma == 0.0 {
                return Ok(img.clone());
            }
            let normal = Normal::new(0.0, *sigma).expect("sigma validated");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = img
                .data
                .iter()
                .map(|&v| {
                    (v as f64 + normal.sample(&mut rng))
                        .round()
                        .clamp(0.0, 255.0) as u8
                })
                .collect();
            Ok(ImageBuffer {
                width: w,
                height: h,
                data,
            })
        }
    }
}

/// Mean absolute per-channel difference over pixels where `mask` is true
/// (all pixels when `mask` is `None`). Returns `None` for an empty region.
pub fn mean_abs_diff(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&[bool]>) -> Option<f64> {
    assert_eq!((a.width, a.height), (b.width, b.height));
    let mut sum = 0u64;
    let mut n = 0u64;
    for (i, (pa, pb)) in a.data.chunks_exact(3).zip(b.data.chunks_exact(3)).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        for c in 0..3 {
            sum += (pa[c] as i32 - pb[c] as i32).unsigned_abs() as u64;
        }
        n += 3;
    }
    (n > 0).then(|| sum as f64 / n as f64)
}

/// Separable Gaussian blur of a single-channel float image.
pub fn gaussian_blur(src: &[f32], w: usize, h: usize, sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= s);

    let r = radius as usize;
    // both passes accumulate whole rows per tap so the inner loops vectorize
    let mut tmp = vec![0f32; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let src_row = &src[y * w..(y + 1) * w];
        let mut padded = Vec::with_capacity(w + 2 * r);
        padded.extend(std::iter::repeat_n(src_row[0], r));
        padded.extend_from_slice(src_row);
        padded.extend(std::iter::repeat_n(src_row[w - 1], r));
        for (k, &kv) in kernel.iter().enumerate() {
            for (o, &v) in row.iter_mut().zip(&padded[k..k + w]) {
                *o += kv * v;
            }
        }
    });
    let mut out = vec![0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
            for (o, &v) in row.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *o += kv * v;
            }
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, y| {
            let v = (((x / 7) + (y / 5)) % 2 * 200 + 20) as u8;
            [v, (x * 3 % 256) as u8, (y * 5 % 256) as u8]
        })
    }

    #[test]
    fn identity_warp_is_exact_copy() {
        let img = checker(64, 48);
        let out = warp_homography(&img, &Matrix3::identity(), 64, 48).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn integer_translation_shifts_and_blackens() {
        let img = checker(64, 48);
        let mut h = Matrix3::identity();
        h[(0, 2)] = 10.0;
        let out = warp_homography(&img, &h, 64, 48).unwrap();
        for y in 0..48 {
            for x in 0..64 {
                if x < 10 {
                    assert_eq!(out.get(x, y), [0, 0, 0]);
                } else {
                    assert_eq!(out.get(x, y), img.get(x - 10, y));
                }
            }
        }
    }

    #[test]
    fn singular_homography_rejected() {
        let img = checker(8, 8);
        let h = Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            warp_homography(&img, &h, 8, 8),
            Err(ImageError::SingularHomography(_))
        ));
    }

    #[test]
    fn constant_image_stays_constant_inside_mapped_region() {
        let img = ImageBuffer::filled(80, 60, [90, 140, 30]);
        let h = Matrix3::new(0.9, 0.1, 5.0, -0.05, 1.1, 3.0, 1e-4, -2e-4, 1.0);
        let out = warp_homography(&img, &h, 80, 60).unwrap();
        let cov = warp_coverage(80, 60, &h, 80, 60);
        let mut seen = 0;
        for (i, c) in cov.iter().enumerate() {
            if *c {
                seen += 1;
                assert_eq!(out.get(i % 80, i / 80), [90, 140, 30]);
            }
        }
        assert!(seen > 1000);
    }

    #[test]
    fn gamma_one_is_identity() {
        let img = checker(32, 32);
        assert_eq!(inject_perturbation(&img, &Perturbation::Gamma(1.0), 0).unwrap(), img);
    }

    #[test]
    fn full_cover_occlusion_is_uniform() {
        let img = checker(32, 20);
        let spec = OcclusionSpec::rect(-1.0, -1.0, 33.0, 21.0, OcclusionFill::Constant([7, 8, 9]));
        let out = inject_perturbation(&img, &Perturbation::Occlusion(spec), 0).unwrap();
        assert_eq!(out, ImageBuffer::filled(32, 20, [7, 8, 9]));
    }

    #[test]
    fn invalid_specs_rejected() {
        let img = checker(8, 8);
        let empty = OcclusionSpec {
            vertices: vec![[0.0, 0.0], [1.0, 1.0]],
            fill: OcclusionFill::Noise,
        };
        assert!(inject_perturbation(&img, &Perturbation::Occlusion(empty), 0).is_err());
        let flat = OcclusionSpec {
            vertices: vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]],
            fill: OcclusionFill::Noise,
        };
        assert!(inject_perturbation(&img, &Perturbation::Occlusion(flat), 0).is_err());
        assert!(inject_perturbation(&img, &Perturbation::Gamma(0.0), 0).is_err());
        assert!(inject_perturbation(&img, &Perturbation::Gamma(-1.0), 0).is_err());
        assert!(inject_perturbation(&img, &Perturbation::GaussianNoise(-1.0), 0).is_err());
    }

    #[test]
    fn gaussian_noise_moments() {
        // mid-gray keeps clamping out of play at sigma = 5
        let img = ImageBuffer::filled(200, 200, [128, 128, 128]);
        let out = inject_perturbation(&img, &Perturbation::GaussianNoise(5.0), 42).unwrap();
        let devs: Vec<f64> = out.data().iter().map(|&v| v as f64 - 128.0).collect();
        let n = devs.len() as f64;
        assert!(n >= 1e5);
        let mean = devs.iter().sum::<f64>() / n;
        let var = devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // rounding to integers adds 1/12 to the variance
        let expected_var = 25.0 + 1.0 / 12.0;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - expected_var).abs() < 0.5, "var {var}");
        let again = inject_perturbation(&img, &Perturbation::GaussianNoise(5.0), 42).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn specular_brightens_center_only() {
        let img = ImageBuffer::filled(50, 50, [100, 100, 100]);
        let out = inject_perturbation(
            &img,
            &Perturbation::Specular {
                center: [25.0, 25.0],
                radius: 10.0,
                gain: 1.0,
            },
            0,
        )
        .unwrap();
        assert_eq!(out.get(25, 25), [255, 255, 255]);
        assert_eq!(out.get(0, 0), [100, 100, 100]);
        assert_eq!(out.width(), 50);
    }

    #[test]
    fn png_round_trip() {
        let img = checker(33, 17);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        img.save_png(&p).unwrap();
        assert_eq!(ImageBuffer::load_png(&p).unwrap(), img);
    }

    #[test]
    fn blur_preserves_constant() {
        let src = vec![3.5f32; 20 * 10];
        let out = gaussian_blur(&src, 20, 10, 1.3);
        assert!(out.iter().all(|v| (v - 3.5).abs() < 1e-5));
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn perturbations_keep_dimensions(w in 1usize..40, h in 1usize..40, g in 0.2f64..3.0, s in 0.0f64..20.0) {
            let img = ImageBuffer::filled(w, h, [10, 200, 90]);
            for p in [Perturbation::Gamma(g), Perturbation::GaussianNoise(s)] {
                let out = inject_perturbation(&img, &p, 1).unwrap();
                prop_assert_eq!((out.width(), out.height()), (w, h));
            }
        }
    }
}
