use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::geometry::Rotation;

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .normalize()
}

/// Probe-like poses above the plane with diverse orientations.
fn estimates(rng: &mut ChaCha8Rng, n: usize) -> Vec<Pose> {
    (0..n)
        .map(|_| {
            let r = Rotation::from_axis_angle(&(random_unit(rng) * rng.random_range(0.2..1.2)));
            let t = Vector3::new(
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(0.07..0.1),
            );
            Pose::new(r, t)
        })
        .collect()
}

fn offset(rng: &mut ChaCha8Rng, mm: f64, deg: f64) -> Pose {
    Pose::new(
        Rotation::from_axis_angle(&(random_unit(rng) * deg.to_radians())),
        random_unit(rng) * mm * 1e-3,
    )
}

fn planted(seed: u64) -> (Vec<CalibrationPair>, Pose, Pose) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = offset(&mut rng, 2.0, 1.0);
    let v = offset(&mut rng, 3.0, 1.5);
    let pairs = estimates(&mut rng, 10)
        .into_iter()
        .map(|n| CalibrationPair { m: u * n * v, n })
        .collect();
    (pairs, u, v)
}

#[test]
fn aligned_pairs_give_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<_> = estimates(&mut rng, 6)
        .into_iter()
        .map(|n| CalibrationPair { m: n, n })
        .collect();
    let c = calibrate(&pairs, DEFAULT_ZETA).unwrap();
    assert_eq!(c.u, Pose::identity());
    assert_eq!(c.v, Pose::identity());
    assert!(c.loss < 1e-15, "{}", c.loss);
    assert_eq!(c.pairs, 6);
}

#[test]
fn planted_offsets_are_recovered() {
    for seed in 0..5 {
        let (pairs, u, v) = planted(seed);
        let c = calibrate(&pairs, DEFAULT_ZETA).unwrap();
        let (ut, ur) = c.u.distance_to(&u);
        let (vt, vr) = c.v.distance_to(&v);
        assert!(ut < 0.1e-3 && vt < 0.1e-3, "seed {seed}: {ut} {vt}");
        assert!(ur < 0.01f64.to_radians() && vr < 0.01f64.to_radians(), "seed {seed}: {ur} {vr}");
        for p in &pairs {
            let (dt, dr) = apply_correction(&c, &p.n).distance_to(&p.m);
            assert!(dt < 1e-6 && dr < 1e-6);
        }
    }
}

#[test]
fn noisy_pairs_stay_near_planted_offsets() {
    let (pairs, u, v) = planted(11);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let tn = Normal::new(0.0, 0.2e-3).unwrap();
    let rn = Normal::new(0.0, 0.1f64.to_radians()).unwrap();
    let noisy: Vec<_> = pairs
        .iter()
        .map(|p| {
            let jitter = Pose::new(
                Rotation::from_axis_angle(&Vector3::from_fn(|_, _| rn.sample(&mut rng))),
                Vector3::from_fn(|_, _| tn.sample(&mut rng)),
            );
            CalibrationPair { m: p.m, n: p.n * jitter }
        })
        .collect();
    let c = calibrate(&noisy, DEFAULT_ZETA).unwrap();
    let (ut, ur) = c.u.distance_to(&u);
    let (vt, vr) = c.v.distance_to(&v);
    assert!(ut < 0.5e-3 && vt < 0.5e-3, "{ut} {vt}");
    assert!(ur < 0.1f64.to_radians() && vr < 0.1f64.to_radians(), "{ur} {vr}");
    // loss at the noise floor: each pair carries ~0.3 mm + ζ·0.17°
    let per_pair = c.loss / noisy.len() as f64;
    assert!(per_pair < 1.5e-3, "{per_pair}");
    assert!(c.loss <= total_loss(&noisy, &u, &v, DEFAULT_ZETA) + 1e-12);
}

#[test]
fn correction_never_increases_error() {
    let (pairs, _, _) = planted(3);
    let c = calibrate(&pairs, DEFAULT_ZETA).unwrap();
    let before = total_loss(&pairs, &Pose::identity(), &Pose::identity(), DEFAULT_ZETA);
    assert!(c.loss < before);
    let mean_t = |f: &dyn Fn(&Pose) -> Pose| {
        pairs.iter().map(|p| f(&p.n).distance_to(&p.m).0).sum::<f64>() / pairs.len() as f64
    };
    assert!(mean_t(&|n| apply_correction(&c, n)) <= mean_t(&|n| *n));
}

#[test]
fn minimizer_is_zeta_invariant() {
    let (pairs, _, _) = planted(5);
    let a = calibrate(&pairs, 0.1).unwrap();
    let b = calibrate(&pairs, 1.0).unwrap();
    let (dt, dr) = a.u.distance_to(&b.u);
    assert!(dt < 1e-6 && dr < 1e-6);
    let (dt, dr) = a.v.distance_to(&b.v);
    assert!(dt < 1e-6 && dr < 1e-6);
}

#[test]
fn identity_and_inverse_corrections() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = estimates(&mut rng, 1)[0];
    assert_eq!(apply_correction(&Sim2RealCorrection::identity(), &p), p);
    let c = Sim2RealCorrection {
        u: offset(&mut rng, 2.0, 1.0),
        v: offset(&mut rng, 2.0, 1.0),
        ..Sim2RealCorrection::identity()
    };
    let inv = c.inverse();
    let back = inv.u * apply_correction(&c, &p) * inv.v;
    let (dt, dr) = back.distance_to(&p);
    assert!(dt < 1e-9 && dr < 1e-9);
}

#[test]
fn degenerate_sets_are_rejected() {
    let (pairs, _, _) = planted(2);
    assert!(matches!(
        calibrate(&pairs[..3], DEFAULT_ZETA),
        Err(Sim2RealError::DegenerateSet(_))
    ));
    // all estimates rotate about one axis only
    let u = Pose::from_translation(Vector3::new(0.001, 0.0, 0.0));
    let single_axis: Vec<_> = (0..8)
        .map(|i| {
            let n = Pose::new(
                Rotation::from_rpy(0.0, 0.0, 0.3 * i as f64),
                Vector3::new(0.01 * i as f64, 0.0, 0.08),
            );
            CalibrationPair { m: u * n, n }
        })
        .collect();
    assert!(matches!(
        calibrate(&single_axis, DEFAULT_ZETA),
        Err(Sim2RealError::DegenerateSet(_))
    ));
}

#[test]
fn pair_loss_examples() {
    let a = Pose::identity();
    let b = Pose::new(
        Rotation::from_rpy(0.0, 0.0, 0.5),
        Vector3::new(0.003, 0.004, 0.0),
    );
    assert_eq!(pair_loss(&a, &a, 0.1), 0.0);
    assert!((pair_loss(&a, &b, 0.1) - (0.005 + 0.05)).abs() < 1e-12);
    assert!((pair_loss(&a, &b, 0.0) - 0.005).abs() < 1e-12);
    assert!(pair_loss(&a, &b, 0.1) >= 0.0);
}

#[test]
fn correction_file_round_trip() {
    let (pairs, _, _) = planted(4);
    let c = calibrate(&pairs, DEFAULT_ZETA).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("calib.json");
    c.save(&path).unwrap();
    let back = Sim2RealCorrection::load(&path).unwrap();
    let (dt, dr) = back.u.distance_to(&c.u);
    assert!(dt < 1e-15 && dr < 1e-12);
    assert_eq!(back.pairs, 10);
    assert_eq!(back.zeta, DEFAULT_ZETA);
    std::fs::write(&path, "{\"u\": 1}").unwrap();
    assert!(matches!(Sim2RealCorrection::load(&path), Err(Sim2RealError::Format(_))));
}
