//! Occlusion-free observations: register the known workspace pattern to a
//! live frame and replace the whole frame by the warped pattern.
//!
//! Registration runs in two passes. The first matches the live frame against
//! a precomputed index of pattern features, which tolerates the large scale
//! change between pattern and camera raster but localizes coarsely. The
//! pattern is then warped into the camera raster with that estimate and
//! registered against the live frame again; at equal scale the second pass is
//! much tighter, and the composition of both is the reported homography.

use std::path::Path;
use std::sync::Arc;

use crate::image::{warp_homography, ImageBuffer, ImageError};
use crate::registration::{
    detect_and_describe, register, DetectorConfig, Feature, Homography, MatchDump,
    RegistrationConfig, RegistrationError,
};

#[derive(Debug, thiserror::Error)]
pub enum RestorationError {
    #[error("restoration failed: {0}")]
    RestorationFailed(#[from] RegistrationError),
    #[error("restoration rejected: inlier ratio {0:.3} below {1:.3}")]
    LowInlierRatio(f64, f64),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestoreConfig {
    /// Detector used on the full-resolution pattern (built once).
    pub pattern_detector: DetectorConfig,
    /// Detector used on camera-raster images.
    pub view_detector: DetectorConfig,
    pub registration: RegistrationConfig,
    pub min_inlier_ratio: f64,
    /// Equal-scale refinement passes after the coarse pattern match.
    pub refine_passes: usize,
}

impl Default for RestoreConfig {
    fn default() -> Self {
        Self {
            pattern_detector: DetectorConfig {
                max_features: 12_000,
                levels: 5,
                ..DetectorConfig::default()
            },
            view_detector: DetectorConfig::default(),
            registration: RegistrationConfig::default(),
            min_inlier_ratio: 0.15,
            refine_passes: 2,
        }
    }
}

/// The canonical pattern together with its cached features.
#[derive(Clone, Debug)]
pub struct PatternIndex {
    pattern: Arc<ImageBuffer>,
    features: Vec<Feature>,
}

impl PatternIndex {
    pub fn new(pattern: Arc<ImageBuffer>, cfg: &RestoreConfig) -> Result<Self, RestorationError> {
        let features = detect_and_describe(&pattern, &cfg.pattern_detector)?;
        Ok(Self { pattern, features })
    }

    pub fn pattern(&self) -> &Arc<ImageBuffer> {
        &self.pattern
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }
}

/// A camera frame replaced by the registered, ideal workspace texture.
#[derive(Clone, Debug)]
pub struct RestoredView {
    pub image: ImageBuffer,
    pub h_pattern_to_view: Homography,
    pub inlier_ratio: f64,
}

/// Restores `live` against `pattern`, indexing the pattern on the fly.
pub fn restore_view(
    live: &ImageBuffer,
    pattern: &ImageBuffer,
) -> Result<RestoredView, RestorationError> {
    let cfg = RestoreConfig::default();
    let index = PatternIndex::new(Arc::new(pattern.clone()), &cfg)?;
    restore_with_index(live, &index, &cfg)
}

pub fn restore_with_index(
    live: &ImageBuffer,
    index: &PatternIndex,
    cfg: &RestoreConfig,
) -> Result<RestoredView, RestorationError> {
    restore_traced(live, index, cfg).map(|(v, _)| v)
}

/// Like [`restore_with_index`], also returning the last pass's match dump.
pub fn restore_traced(
    live: &ImageBuffer,
    index: &PatternIndex,
    cfg: &RestoreConfig,
) -> Result<(RestoredView, MatchDump), RestorationError> {
    let (w, h) = (live.width(), live.height());
    let live_feats = detect_and_describe(live, &cfg.view_detector)?;
    let coarse = register(
        index.features(),
        &live_feats,
        &cfg.registration,
        "pattern",
        "view",
    )?;
    let mut dump = MatchDump::new(&coarse, index.features(), &live_feats);
    let mut h_pv = coarse.fit.homography;
    let mut ratio = h_pv.inlier_ratio;
    for _ in 0..cfg.refine_passes {
        let warped = warp_homography(index.pattern(), h_pv.matrix(), w, h)?;
        let warped_feats = detect_and_describe(&warped, &cfg.view_detector)?;
        let reg = register(
            &warped_feats,
            &live_feats,
            &cfg.registration,
            "warped",
            "view",
        )?;
        dump = MatchDump::new(&reg, &warped_feats, &live_feats);
        ratio = reg.fit.homography.inlier_ratio;
        let to_warped = Homography::new(*h_pv.matrix(), "pattern", "warped")?;
        h_pv = to_warped.then(&reg.fit.homography)?;
    }
    if ratio < cfg.min_inlier_ratio {
        return Err(RestorationError::LowInlierRatio(ratio, cfg.min_inlier_ratio));
    }
    let image = warp_homography(index.pattern(), h_pv.matrix(), w, h)?;
    Ok((
        RestoredView {
            image,
            h_pattern_to_view: h_pv,
            inlier_ratio: ratio,
        },
        dump,
    ))
}

/// Writes `live | restored` side by side.
pub fn save_side_by_side(
    live: &ImageBuffer,
    restored: &RestoredView,
    path: impl AsRef<Path>,
) -> Result<(), ImageError> {
    live.side_by_side(&restored.image).save_png(path)
}
