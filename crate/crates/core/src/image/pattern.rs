//! Procedural workspace texture: a jittered-grid Voronoi mosaic with random
//! RGB cell colors, lightly blurred so edges stay band-limited under
//! resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gaussian_blur, ImageBuffer};

/// Parameters of the generated texture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatternParams {
    pub size_px: usize,
    /// Mean Voronoi cell spacing in pixels.
    pub cell_px: f64,
    /// Anti-aliasing blur, pixels.
    pub blur_sigma: f32,
    pub seed: u64,
}

impl Default for PatternParams {
    fn default() -> Self {
        Self {
            size_px: 2000,
            cell_px: 16.0,
            blur_sigma: 1.0,
            seed: 20240611,
        }
    }
}

pub fn generate_pattern(params: &PatternParams) -> ImageBuffer {
    let n = params.size_px;
    let cell = params.cell_px;
    let grid = (n as f64 / cell).ceil() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut sites = Vec::with_capacity(grid * grid);
    for gy in 0..grid {
        for gx in 0..grid {
            let sx = (gx as f64 + rng.random_range(0.05..0.95)) * cell;
            let sy = (gy as f64 + rng.random_range(0.05..0.95)) * cell;
            let color: [u8; 3] = [rng.random(), rng.random(), rng.random()];
            sites.push((sx, sy, color));
        }
    }
    let nearest = |x: usize, y: usize| -> [u8; 3] {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let gx = (px / cell) as isize;
        let gy = (py / cell) as isize;
        let mut best = (f64::INFINITY, [0u8; 3]);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (cx, cy) = (gx + dx, gy + dy);
                if cx < 0 || cy < 0 || cx >= grid as isize || cy >= grid as isize {
                    continue;
                }
                let (sx, sy, c) = sites[cy as usize * grid + cx as usize];
                let d = (sx - px).powi(2) + (sy - py).powi(2);
                if d < best.0 {
                    best = (d, c);
                }
            }
        }
        best.1
    };
    let sharp = ImageBuffer::from_fn(n, n, nearest);
    if params.blur_sigma <= 0.0 {
        return sharp;
    }
    let mut channels: Vec<Vec<f32>> = (0..3)
        .map(|c| sharp.data().iter().skip(c).step_by(3).map(|&v| v as f32).collect())
        .collect();
    for ch in channels.iter_mut() {
        *ch = gaussian_blur(ch, n, n, params.blur_sigma);
    }
    let mut data = vec![0u8; n * n * 3];
    for (i, px) in data.chunks_exact_mut(3).enumerate() {
        for c in 0..3 {
            px[c] = channels[c][i].round().clamp(0.0, 255.0) as u8;
        }
    }
    ImageBuffer::from_raw(n, n, data).expect("dimensions consistent")
}
