use std::sync::{Arc, OnceLock};

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use super::*;
use crate::geometry::{Pose, Rotation};
use crate::image::pattern::{generate_pattern, PatternParams};
use crate::image::{inject_perturbation, warp_homography, ImageBuffer, OcclusionFill, OcclusionSpec, Perturbation};
use crate::simcam::{render_view, Intrinsics, PlaneSpec};

fn plane() -> &'static PlaneSpec {
    static PLANE: OnceLock<PlaneSpec> = OnceLock::new();
    PLANE.get_or_init(|| {
        let pattern = generate_pattern(&PatternParams {
            size_px: 1000,
            ..Default::default()
        });
        PlaneSpec::new(Arc::new(pattern), [0.4, 0.4])
    })
}

fn reference_render() -> ImageBuffer {
    let cam = Pose::new(
        Rotation::from_rpy(std::f64::consts::PI, 0.0, 0.0) * Rotation::from_rpy(0.2, 0.1, 0.0),
        nalgebra::Vector3::new(0.01, 0.0, 0.12),
    );
    render_view(&cam, &Intrinsics::default(), plane()).unwrap()
}

fn rotate90(img: &ImageBuffer) -> ImageBuffer {
    // (x, y) -> (h - 1 - y, x)
    let (w, h) = (img.width(), img.height());
    ImageBuffer::from_fn(h, w, |x, y| img.get(y, h - 1 - x))
}

#[test]
fn uniform_image_has_too_few_features() {
    let gray = ImageBuffer::filled(200, 200, [128, 128, 128]);
    assert!(matches!(
        detect_and_describe(&gray, &DetectorConfig::default()),
        Err(RegistrationError::TooFewFeatures(_))
    ));
}

#[test]
fn tiny_image_is_rejected() {
    let img = ImageBuffer::filled(32, 200, [10, 200, 30]);
    assert!(detect_and_describe(&img, &DetectorConfig::default()).is_err());
}

#[test]
fn pattern_render_yields_many_sorted_keypoints() {
    let img = reference_render();
    let f = detect_and_describe(&img, &DetectorConfig::default()).unwrap();
    assert!(f.len() >= 500, "{} keypoints", f.len());
    assert!(f.len() <= 1500);
    for w in f.windows(2) {
        assert!(w[0].keypoint.response >= w[1].keypoint.response);
    }
    for k in f.iter().map(|f| f.keypoint) {
        assert!(k.x >= 0.0 && k.y >= 0.0 && k.x < 640.0 && k.y < 360.0 && k.scale > 0.0);
    }
    let again = detect_and_describe(&img, &DetectorConfig::default()).unwrap();
    assert_eq!(f, again);
}

#[test]
fn keypoints_repeat_under_quarter_turn() {
    let img = reference_render();
    let rot = rotate90(&img);
    let cfg = DetectorConfig::default();
    let a = detect_and_describe(&img, &cfg).unwrap();
    let b = detect_and_describe(&rot, &cfg).unwrap();
    let h = img.height() as f64;
    let hits = a
        .iter()
        .filter(|f| {
            let (x, y) = (h - 1.0 - f.keypoint.y, f.keypoint.x);
            b.iter()
                .any(|g| (g.keypoint.x - x).hypot(g.keypoint.y - y) <= 1.5)
        })
        .count();
    let rate = hits as f64 / a.len() as f64;
    assert!(rate >= 0.6, "repeatability {rate:.3}");
}

#[test]
fn self_match_is_identity() {
    let f = detect_and_describe(&reference_render(), &DetectorConfig::default()).unwrap();
    let m = match_features(&f, &f, &MatchConfig::default()).unwrap();
    assert_eq!(m.pairs.len(), f.len());
    for p in &m.pairs {
        assert_eq!(p.src, p.dst);
        assert_eq!(p.distance, 0);
    }
}

#[test]
fn matching_is_symmetric() {
    let cfg = DetectorConfig::default();
    let a = detect_and_describe(&reference_render(), &cfg).unwrap();
    let b = detect_and_describe(&rotate90(&reference_render()), &cfg).unwrap();
    let ab = match_features(&a, &b, &MatchConfig::default()).unwrap();
    let ba = match_features(&b, &a, &MatchConfig::default()).unwrap();
    let mut x: Vec<_> = ab.pairs.iter().map(|m| (m.src, m.dst)).collect();
    let mut y: Vec<_> = ba.pairs.iter().map(|m| (m.dst, m.src)).collect();
    x.sort_unstable();
    y.sort_unstable();
    assert_eq!(x, y);
}

#[test]
fn fully_occluded_view_yields_no_matches() {
    let img = reference_render();
    let (w, h) = (img.width() as f64, img.height() as f64);
    let cover = OcclusionSpec::rect(-1.0, -1.0, w + 1.0, h + 1.0, OcclusionFill::Constant([40, 40, 40]));
    let blind = inject_perturbation(&img, &Perturbation::Occlusion(cover), 1).unwrap();
    let cfg = DetectorConfig::default();
    let a = detect_and_describe(&img, &cfg).unwrap();
    let b = detect_and_describe(&blind, &cfg).unwrap_or_default();
    assert!(matches!(
        match_features(&a, &b, &MatchConfig::default()),
        Err(RegistrationError::NoMatches)
    ));
}

#[test]
fn planted_warp_matches_are_mostly_inliers() {
    let img = reference_render();
    let h = Matrix3::new(0.95, 0.08, 12.0, -0.06, 1.02, -8.0, 1e-4, -5e-5, 1.0);
    let warped = warp_homography(&img, &h, img.width(), img.height()).unwrap();
    let cfg = DetectorConfig::default();
    let a = detect_and_describe(&img, &cfg).unwrap();
    let b = detect_and_describe(&warped, &cfg).unwrap();
    let m = match_features(&a, &b, &MatchConfig::default()).unwrap();
    let corr = correspondences(&m, &a, &b);
    let good = corr
        .iter()
        .filter(|c| (transfer(&h, &c.src) - c.dst).norm() <= 3.0)
        .count();
    let rate = good as f64 / corr.len() as f64;
    assert!(rate >= 0.7, "{good}/{} inliers", corr.len());
}

fn square() -> Vec<Correspondence> {
    [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
        .iter()
        .map(|&(x, y)| Correspondence {
            src: Vector2::new(x, y),
            dst: Vector2::new(x, y),
        })
        .collect()
}

#[test]
fn exact_minimal_case_is_identity() {
    let cfg = RansacConfig {
        min_inliers: 4,
        ..Default::default()
    };
    let h = estimate_homography(&square(), &cfg).unwrap();
    assert!((h.matrix() - Matrix3::identity()).abs().max() < 1e-9);
}

#[test]
fn three_matches_are_insufficient() {
    let corr = &square()[..3];
    assert!(matches!(
        estimate_homography(corr, &RansacConfig::default()),
        Err(RegistrationError::InsufficientMatches(3))
    ));
}

fn planted() -> Matrix3<f64> {
    Matrix3::new(1.1, 0.05, 20.0, -0.04, 0.93, 15.0, 2e-4, 1e-4, 1.0)
}

fn planted_set(seed: u64, outlier_rate: f64, noise: f64) -> (Vec<Correspondence>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = planted();
    let gauss = Normal::new(0.0, noise.max(1e-300)).unwrap();
    (0..200)
        .map(|_| {
            let src = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..360.0));
            if rng.random_bool(outlier_rate) {
                let dst = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..360.0));
                (Correspondence { src, dst }, false)
            } else {
                let n = if noise > 0.0 {
                    Vector2::new(gauss.sample(&mut rng), gauss.sample(&mut rng))
                } else {
                    Vector2::zeros()
                };
                (Correspondence { src, dst: transfer(&h, &src) + n }, true)
            }
        })
        .unzip()
}

#[test]
fn ransac_rejects_outliers() {
    let (corr, truth) = planted_set(42, 0.3, 0.3);
    let h = estimate_homography(&corr, &RansacConfig::default()).unwrap();
    let g = planted();
    let sq: Vec<f64> = corr
        .iter()
        .zip(&truth)
        .filter(|(_, t)| **t)
        .map(|(c, _)| (h.transfer(&c.src) - transfer(&g, &c.src)).norm_squared())
        .collect();
    let rms = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
    assert!(rms <= 0.5, "rms {rms}");
}

#[test]
fn ransac_is_reproducible() {
    let (corr, _) = planted_set(7, 0.4, 0.5);
    let a = estimate_homography_fit(&corr, &RansacConfig::default(), "a", "b").unwrap();
    let b = estimate_homography_fit(&corr, &RansacConfig::default(), "a", "b").unwrap();
    assert_eq!(a, b);
}

#[test]
fn estimate_is_invariant_to_coordinate_scaling() {
    let (corr, _) = planted_set(9, 0.0, 0.0);
    let s = 3.7;
    let scaled: Vec<_> = corr
        .iter()
        .map(|c| Correspondence {
            src: c.src * s,
            dst: c.dst * s,
        })
        .collect();
    let cfg = RansacConfig::default();
    let h = estimate_homography(&corr, &cfg).unwrap();
    let hs = estimate_homography(&scaled, &cfg).unwrap();
    let sm = Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0);
    let back = sm.try_inverse().unwrap() * hs.matrix() * sm;
    let back = back / back[(2, 2)];
    for (x, y) in back.iter().zip(h.matrix().iter()) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-6);
    }
}

#[test]
fn homography_rejects_same_frames_and_singular() {
    assert!(Homography::new(Matrix3::identity(), "a", "a").is_err());
    let singular = Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0);
    assert!(Homography::new(singular, "a", "b").is_err());
    let h = Homography::new(planted() * 3.0, "a", "b").unwrap();
    assert_abs_diff_eq!(h.matrix()[(2, 2)], 1.0);
    let back = h.then(&h.inverse()).unwrap_err();
    assert!(matches!(back, RegistrationError::InvalidHomography(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inlier_accounting_is_honest(seed in any::<u64>(), rate in 0.0f64..0.6, noise in 0.0f64..2.0) {
        let (corr, _) = planted_set(seed, rate, noise);
        let cfg = RansacConfig { seed, ..Default::default() };
        if let Ok(fit) = estimate_homography_fit(&corr, &cfg, "a", "b") {
            let h = &fit.homography;
            prop_assert!(h.inlier_ratio <= 1.0);
            prop_assert_eq!(h.inlier_count, fit.inliers.iter().filter(|m| **m).count());
            for (c, inl) in corr.iter().zip(&fit.inliers) {
                if *inl {
                    prop_assert!((h.transfer(&c.src) - c.dst).norm() <= cfg.threshold);
                }
            }
        }
    }
}

