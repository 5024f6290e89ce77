//! End-to-end experiments: ground-truth trajectories, perturbed synthetic
//! observations, the full restore → servo → fuse → correct pipeline per
//! waypoint, and error reporting.
//!
//! Observations are rendered at the pose the *simulator* would need to
//! reproduce them; with a planted Sim2Real offset `(U*, V*)` that is
//! `U*⁻¹ · M · V*⁻¹` for ground truth `M`, so the uncorrected pipeline is off
//! by exactly the planted transforms.

mod report;
mod trajectory;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fusion::{fuse, fuse_weighted, FusedPose, WeightedPose};
use crate::geometry::{Pose, Rotation};
use crate::image::pattern::{generate_pattern, PatternParams};
use crate::image::{
    inject_perturbation, ImageBuffer, ImageError, OcclusionFill, OcclusionSpec, Perturbation,
};
use crate::pose_error::{planar_pnp, PoseError};
use crate::registration::{detect_and_describe, RegistrationError};
use crate::restoration::{restore_with_index, PatternIndex, RestorationError, RestoreConfig, RestoredView};
use crate::servo::{run_session_with, ServoConfig, ServoError, ServoResult, SessionOptions};
use crate::sim2real::{apply_correction, calibrate, CalibrationPair, Sim2RealCorrection, Sim2RealError, DEFAULT_ZETA};
use crate::simcam::{project, render_view_with, CameraRig, PlaneSpec, RenderOptions, RigCamera, SimcamError};

pub use report::{
    error_rows, read_errors_csv, write_errors_csv, write_outputs, CalibrationSummary, ErrorReport,
    ErrorRow, ModeStats, Stats,
};
pub use trajectory::{
    generate_trajectory, probe_orientation, u_shape_length, Trajectory, TrajectoryKind,
};

/// Workspace extent used with the generated pattern, meters.
pub const STANDARD_EXTENT: [f64; 2] = [0.8, 0.8];
pub const DEFAULT_SAMPLES: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("unknown trajectory kind: {0}")]
    UnknownKind(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Restoration(#[from] RestorationError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Servo(#[from] ServoError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Sim2Real(#[from] Sim2RealError),
    #[error(transparent)]
    Simcam(#[from] SimcamError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything a pipeline run needs besides the frames: the plane, the rig
/// and the pattern's feature index.
pub struct Workspace {
    pub plane: PlaneSpec,
    pub rig: CameraRig,
    pub restore: RestoreConfig,
    pub index: PatternIndex,
}

impl Workspace {
    pub fn new(plane: PlaneSpec, rig: CameraRig, restore: RestoreConfig) -> Result<Self, HarnessError> {
        rig.validate()?;
        let index = PatternIndex::new(plane.pattern.clone(), &restore)?;
        Ok(Self {
            plane,
            rig,
            restore,
            index,
        })
    }

    /// Generated default pattern on a 0.8 m square, default dual rig.
    pub fn standard() -> Result<Self, HarnessError> {
        let pattern = Arc::new(generate_pattern(&PatternParams::default()));
        Self::new(
            PlaneSpec::new(pattern, STANDARD_EXTENT),
            CameraRig::default_dual(),
            RestoreConfig::default(),
        )
    }

    fn camera(&self, side: usize) -> Result<&RigCamera, HarnessError> {
        self.rig.cameras.get(side).ok_or_else(|| {
            HarnessError::InvalidConfig(format!("rig has no camera #{side}"))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraMode {
    Left,
    Right,
    Dual,
}

impl CameraMode {
    /// Rig camera indices used by this mode.
    pub fn sides(&self) -> &'static [usize] {
        match self {
            CameraMode::Left => &[0],
            CameraMode::Right => &[1],
            CameraMode::Dual => &[0, 1],
        }
    }

    /// Configurations that can be evaluated from the sessions of this mode.
    pub fn breakdown(&self) -> &'static [CameraMode] {
        match self {
            CameraMode::Left => &[CameraMode::Left],
            CameraMode::Right => &[CameraMode::Right],
            CameraMode::Dual => &[CameraMode::Left, CameraMode::Right, CameraMode::Dual],
        }
    }
}

impl fmt::Display for CameraMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CameraMode::Left => "left",
            CameraMode::Right => "right",
            CameraMode::Dual => "dual",
        })
    }
}

impl FromStr for CameraMode {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "left" => Ok(CameraMode::Left),
            "right" => Ok(CameraMode::Right),
            "dual" => Ok(CameraMode::Dual),
            other => Err(HarnessError::InvalidConfig(format!("unknown camera mode {other:?}"))),
        }
    }
}

/// Magnitudes of the planted Sim2Real offset, applied to both `U*` and `V*`
/// along seeded random directions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedOffset {
    pub trans_mm: f64,
    pub rot_deg: f64,
}

/// Degradations applied to every synthetic observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationProfile {
    pub name: String,
    /// Std-dev of the per-pixel sampling jitter, pixels.
    pub pixel_noise_px: f64,
    /// Fraction of the raster covered by one random occluder; 0 disables.
    pub occlusion_area: f64,
    /// Gamma drawn uniformly from this range.
    pub gamma_range: Option<[f64; 2]>,
    pub planted_offset: Option<PlantedOffset>,
}

impl PerturbationProfile {
    pub fn clean() -> Self {
        Self {
            name: "clean".into(),
            pixel_noise_px: 0.0,
            occlusion_area: 0.0,
            gamma_range: None,
            planted_offset: None,
        }
    }

    /// Pixel noise only.
    pub fn noisy() -> Self {
        Self {
            name: "noisy".into(),
            pixel_noise_px: 0.5,
            ..Self::clean()
        }
    }

    pub fn paperlike() -> Self {
        Self {
            name: "paperlike".into(),
            pixel_noise_px: 0.5,
            occlusion_area: 0.2,
            gamma_range: Some([0.7, 1.4]),
            planted_offset: Some(PlantedOffset {
                trans_mm: 2.0,
                rot_deg: 1.0,
            }),
        }
    }

    pub fn by_name(name: &str) -> Result<Self, HarnessError> {
        match name {
            "clean" => Ok(Self::clean()),
            "noisy" => Ok(Self::noisy()),
            "paperlike" => Ok(Self::paperlike()),
            other => Err(HarnessError::InvalidConfig(format!("unknown perturbation profile {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let ok = self.pixel_noise_px >= 0.0
            && (0.0..0.95).contains(&self.occlusion_area)
            && self
                .gamma_range
                .is_none_or(|[a, b]| a > 0.0 && b >= a && b.is_finite())
            && self
                .planted_offset
                .is_none_or(|o| o.trans_mm >= 0.0 && o.rot_deg >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(HarnessError::InvalidConfig(format!("invalid profile {:?}", self.name)))
        }
    }

    /// The planted `(U*, V*)` for a master seed.
    pub fn planted(&self, seed: u64) -> Option<(Pose, Pose)> {
        let o = self.planted_offset?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX, 0xCA11));
        let mut one = || {
            Pose::new(
                Rotation::from_axis_angle(&(random_unit(&mut rng) * o.rot_deg.to_radians())),
                random_unit(&mut rng) * o.trans_mm * 1e-3,
            )
        };
        let u = one();
        let v = one();
        Some((u, v))
    }
}

/// How each servo session is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitStrategy {
    /// From the pose implied by the restoration homography.
    Restoration,
    /// From the true simulator pose displaced by exactly this much along
    /// seeded random directions (synthetic convergence studies).
    Offset { trans_mm: f64, rot_deg: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub servo: ServoConfig,
    pub init: InitStrategy,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            servo: ServoConfig::default(),
            init: InitStrategy::Restoration,
            seed: 0,
        }
    }
}

/// SplitMix64-style mixing of a master seed with an index and a stream tag.
pub fn derive_seed(master: u64, index: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A pose displaced by exactly `trans_m` and `rot_rad` in random directions
/// (body frame).
pub fn random_offset(pose: &Pose, trans_m: f64, rot_rad: f64, rng: &mut impl Rng) -> Pose {
    let dir = random_unit(rng);
    let axis = random_unit(rng);
    *pose * Pose::new(Rotation::from_axis_angle(&(axis * rot_rad)), dir * trans_m)
}

/// Random probe pose of the working envelope: above the pattern interior,
/// probe height 0.07–0.10 m, tilt ≤ 10°, any heading.
pub fn random_probe_pose(rng: &mut impl Rng) -> Pose {
    let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let tilt_axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
    let tilt_axis = if tilt_axis.norm() > 1e-6 { tilt_axis.normalize() } else { Vector3::x() };
    let tilt = Rotation::from_axis_angle(&(tilt_axis * rng.random_range(0.0..10f64.to_radians())));
    let down = Rotation::from_axis_angle(&(Vector3::x() * std::f64::consts::PI));
    Pose::new(
        Rotation::from_rpy(0.0, 0.0, heading) * tilt * down,
        Vector3::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            rng.random_range(0.07..0.10),
        ),
    )
}

/// A quadrilateral spanning the raster top to bottom and covering `frac` of
/// its area.
pub fn random_occlusion(rng: &mut impl Rng, width: usize, height: usize, frac: f64) -> OcclusionSpec {
    let (w, h) = (width as f64, height as f64);
    // top width a and bottom width b with (a + b) / 2 = frac * w
    let total = 2.0 * frac * w;
    let a = rng.random_range(0.25..0.75) * total;
    let b = total - a;
    let x0 = rng.random_range(0.0..(w - a).max(1e-9));
    let x1 = rng.random_range(0.0..(w - b).max(1e-9));
    let shade = rng.random_range(20..110u8);
    OcclusionSpec {
        vertices: vec![[x0, -0.5], [x0 + a, -0.5], [x1 + b, h - 0.5], [x1, h - 0.5]],
        fill: OcclusionFill::Constant([shade, shade.saturating_sub(10), shade.saturating_sub(20)]),
    }
}

/// Renders what a camera sees from the simulator pose `sim_probe` and
/// applies the profile's degradations.
pub fn observe(
    ws: &Workspace,
    camera: &RigCamera,
    sim_probe: &Pose,
    profile: &PerturbationProfile,
    seed: u64,
) -> Result<ImageBuffer, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = RenderOptions {
        pixel_jitter: profile.pixel_noise_px,
        seed: rng.random(),
    };
    let mut img = render_view_with(&camera.camera_pose(sim_probe), &camera.intrinsics, &ws.plane, &opts)?;
    if let Some([lo, hi]) = profile.gamma_range {
        let g = if hi > lo { rng.random_range(lo..hi) } else { lo };
        img = inject_perturbation(&img, &Perturbation::Gamma(g), 0)?;
    }
    if profile.occlusion_area > 0.0 {
        let occ = random_occlusion(&mut rng, img.width(), img.height(), profile.occlusion_area);
        img = inject_perturbation(&img, &Perturbation::Occlusion(occ), rng.random())?;
    }
    Ok(img)
}

/// Probe pose implied by a restoration: the restored pattern-to-view
/// homography resolved with the known plane.
pub fn init_from_restoration(
    plane: &PlaneSpec,
    camera: &RigCamera,
    view: &RestoredView,
) -> Result<Pose, HarnessError> {
    let k = &camera.intrinsics;
    let to_pattern = view.h_pattern_to_view.inverse();
    let p2w = plane.pattern_to_world();
    let mut corr = Vec::with_capacity(48);
    for i in 0..8 {
        for j in 0..6 {
            let px = Vector2::new(
                (i as f64 + 0.5) * k.width as f64 / 8.0,
                (j as f64 + 0.5) * k.height as f64 / 6.0,
            );
            let q = to_pattern.transfer(&px);
            let w = p2w * Vector3::new(q.x, q.y, 1.0);
            corr.push((Vector2::new(w.x / w.z, w.y / w.z), px));
        }
    }
    let cam = planar_pnp(&corr, k)?;
    Ok(camera.probe_pose(&cam))
}

/// Restore one live frame and servo the simulator onto it.
pub fn estimate_camera(
    ws: &Workspace,
    camera: &RigCamera,
    live: &ImageBuffer,
    init: Option<&Pose>,
    servo: &ServoConfig,
) -> Result<ServoResult, HarnessError> {
    let view = restore_with_index(live, &ws.index, &ws.restore)?;
    let init = match init {
        Some(p) => *p,
        None => init_from_restoration(&ws.plane, camera, &view)?,
    };
    let opts = SessionOptions::default();
    let target = detect_and_describe(&view.image, &opts.detector)?;
    Ok(run_session_with(&target, camera, &ws.plane, &init, servo, &opts)?)
}

/// Per-camera sessions and their fusion for one frame set.
#[derive(Clone, Debug)]
pub struct FrameEstimate {
    /// Indexed by rig camera; `None` for cameras not used.
    pub sessions: [Option<Result<ServoResult, String>>; 2],
    pub fused: Option<FusedPose>,
}

impl FrameEstimate {
    fn ok(&self, side: usize) -> Option<&ServoResult> {
        self.sessions[side].as_ref().and_then(|r| r.as_ref().ok())
    }

    /// Uncorrected probe estimate for a camera configuration; `None` when it
    /// failed or did not converge.
    pub fn pose(&self, mode: CameraMode) -> Option<Pose> {
        match mode {
            CameraMode::Left => self.ok(0).filter(|r| r.converged).map(|r| r.pose),
            CameraMode::Right => self.ok(1).filter(|r| r.converged).map(|r| r.pose),
            CameraMode::Dual => self.fused.as_ref().map(|f| f.pose),
        }
    }

    pub fn iterations(&self) -> usize {
        (0..2).filter_map(|s| self.ok(s)).map(|r| r.iterations).sum()
    }
}

/// Runs the per-camera pipeline on the given frames (`None` = camera absent)
/// and fuses the results. `inits` are probe poses per camera.
pub fn estimate_frames(
    ws: &Workspace,
    frames: [Option<&ImageBuffer>; 2],
    inits: [Option<Pose>; 2],
    servo: &ServoConfig,
) -> Result<FrameEstimate, HarnessError> {
    let mut sessions: [Option<Result<ServoResult, String>>; 2] = [None, None];
    for side in 0..2 {
        if let Some(img) = frames[side] {
            let cam = ws.camera(side)?;
            sessions[side] = Some(
                estimate_camera(ws, cam, img, inits[side].as_ref(), servo).map_err(|e| e.to_string()),
            );
        }
    }
    let get = |s: usize| sessions[s].as_ref().and_then(|r| r.as_ref().ok());
    let fused = fuse(get(0), get(1)).ok();
    Ok(FrameEstimate { sessions, fused })
}

/// One evaluated waypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct WaypointRecord {
    pub idx: usize,
    pub stamp: f64,
    pub truth: Pose,
    /// Corrected estimates per camera configuration of the breakdown.
    pub estimates: Vec<(CameraMode, Option<Pose>)>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub report: ErrorReport,
    pub records: Vec<WaypointRecord>,
}

/// Identifying fields copied into the report.
#[derive(Clone, Debug)]
pub struct RunLabel {
    pub trajectory: String,
    pub profile: String,
    pub method: String,
    pub mode: CameraMode,
    pub seed: u64,
}

fn check_mode(ws: &Workspace, mode: CameraMode) -> Result<(), HarnessError> {
    for &s in mode.sides() {
        ws.camera(s)?;
    }
    Ok(())
}

fn sim_pose(planted: Option<&(Pose, Pose)>, truth: &Pose) -> Pose {
    match planted {
        Some((u, v)) => u.inverse() * *truth * v.inverse(),
        None => *truth,
    }
}

fn session_inits(
    ws: &Workspace,
    sim: &Pose,
    cfg: &ExperimentConfig,
    seed: u64,
) -> [Option<Pose>; 2] {
    match cfg.init {
        InitStrategy::Restoration => [None, None],
        InitStrategy::Offset { trans_mm, rot_deg } => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0x1217));
            let cams = ws.rig.cameras.len();
            let mut out = [None, None];
            for slot in out.iter_mut().take(cams) {
                *slot = Some(random_offset(sim, trans_mm * 1e-3, rot_deg.to_radians(), &mut rng));
            }
            out
        }
    }
}

/// Runs the pipeline on every waypoint of `traj`.
pub fn run_experiment(
    traj: &Trajectory,
    ws: &Workspace,
    profile: &PerturbationProfile,
    cfg: &ExperimentConfig,
    correction: Option<&Sim2RealCorrection>,
    mode: CameraMode,
) -> Result<ExperimentOutput, HarnessError> {
    profile.validate()?;
    cfg.servo.validate()?;
    check_mode(ws, mode)?;
    let planted = profile.planted(cfg.seed);
    let records = traj
        .waypoints
        .par_iter()
        .enumerate()
        .map(|(idx, wp)| -> Result<WaypointRecord, HarnessError> {
            let seed = derive_seed(cfg.seed, idx as u64, 1);
            let sim = sim_pose(planted.as_ref(), &wp.pose);
            let mut frames = [None, None];
            for &s in mode.sides() {
                frames[s] = Some(observe(ws, ws.camera(s)?, &sim, profile, derive_seed(seed, s as u64, 2))?);
            }
            let inits = session_inits(ws, &sim, cfg, seed);
            let est = estimate_frames(ws, [frames[0].as_ref(), frames[1].as_ref()], inits, &cfg.servo)?;
            let correct = |p: Pose| correction.map_or(p, |c| apply_correction(c, &p));
            Ok(WaypointRecord {
                idx,
                stamp: wp.stamp,
                truth: wp.pose,
                estimates: mode
                    .breakdown()
                    .iter()
                    .map(|&m| (m, est.pose(m).map(correct)))
                    .collect(),
                iterations: est.iterations(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let label = RunLabel {
        trajectory: traj.kind.to_string(),
        profile: profile.name.clone(),
        method: "servo".into(),
        mode,
        seed: cfg.seed,
    };
    let mut report = ErrorReport::from_records(&label, &records);
    if let Some(c) = correction {
        report.calibration = Some(report::CalibrationSummary::from(c));
    }
    Ok(ExperimentOutput { report, records })
}

/// Number of poses used to calibrate a planted offset.
pub const CALIBRATION_POSES: usize = 10;

/// Diverse calibration poses: headings spread over the full turn, tilts up
/// to 10° about alternating axes.
pub fn calibration_poses(n: usize, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0xCA1B));
    let down = Rotation::from_axis_angle(&(Vector3::x() * std::f64::consts::PI));
    (0..n)
        .map(|i| {
            let heading = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let ax = if i % 2 == 0 { Vector3::x() } else { Vector3::y() };
            let tilt = Rotation::from_axis_angle(&(ax * rng.random_range(6.0..10.0f64).to_radians()));
            Pose::new(
                Rotation::from_rpy(0.0, 0.0, heading) * tilt * down,
                Vector3::new(
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.08..0.08),
                    rng.random_range(0.07..0.10),
                ),
            )
        })
        .collect()
}

/// Collects `(ground truth, estimate)` pairs by running the dual-camera
/// pipeline at known poses under `profile`, then solves for the correction.
pub fn calibrate_offsets(
    ws: &Workspace,
    profile: &PerturbationProfile,
    cfg: &ExperimentConfig,
) -> Result<Sim2RealCorrection, HarnessError> {
    let planted = profile.planted(cfg.seed);
    let mode = if ws.rig.cameras.len() > 1 { CameraMode::Dual } else { CameraMode::Left };
    let poses = calibration_poses(CALIBRATION_POSES, cfg.seed);
    let pairs: Vec<CalibrationPair> = poses
        .par_iter()
        .enumerate()
        .map(|(i, m)| -> Result<Option<CalibrationPair>, HarnessError> {
            let seed = derive_seed(cfg.seed, i as u64, 3);
            let sim = sim_pose(planted.as_ref(), m);
            let mut frames = [None, None];
            for &s in mode.sides() {
                frames[s] = Some(observe(ws, ws.camera(s)?, &sim, profile, derive_seed(seed, s as u64, 2))?);
            }
            let inits = session_inits(ws, &sim, cfg, seed);
            let est = estimate_frames(ws, [frames[0].as_ref(), frames[1].as_ref()], inits, &cfg.servo)?;
            Ok(est.pose(mode).map(|n| CalibrationPair { m: *m, n }))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(calibrate(&pairs, DEFAULT_ZETA)?)
}

/// Calibrates out a planted offset when the profile has one, then runs the
/// experiment with that correction.
pub fn run_protocol(
    traj: &Trajectory,
    ws: &Workspace,
    profile: &PerturbationProfile,
    cfg: &ExperimentConfig,
    mode: CameraMode,
) -> Result<ExperimentOutput, HarnessError> {
    let correction = match profile.planted_offset {
        Some(_) => Some(calibrate_offsets(ws, profile, cfg)?),
        None => None,
    };
    run_experiment(traj, ws, profile, cfg, correction.as_ref(), mode)
}

/// Fiducial-grid baseline: a `grid × grid` lattice of plane points spread
/// over each camera's view, projected with Gaussian pixel noise and resolved
/// by planar PnP. Dual mode fuses the two camera poses with equal weights.
pub fn run_pnp_baseline(
    traj: &Trajectory,
    ws: &Workspace,
    pixel_noise_px: f64,
    grid: usize,
    seed: u64,
    mode: CameraMode,
) -> Result<ExperimentOutput, HarnessError> {
    check_mode(ws, mode)?;
    if grid < 2 {
        return Err(HarnessError::InvalidConfig("fiducial grid needs >= 2 points per side".into()));
    }
    let noise = Normal::new(0.0, pixel_noise_px.max(0.0))
        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let records = traj
        .waypoints
        .iter()
        .enumerate()
        .map(|(idx, wp)| -> Result<WaypointRecord, HarnessError> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, idx as u64, 4));
            let mut per_cam = [None, None];
            for &s in mode.sides() {
                let cam = ws.camera(s)?;
                let wc = cam.camera_pose(&wp.pose);
                per_cam[s] = fiducial_pnp(ws, cam, &wc, grid, &noise, &mut rng)
                    .ok()
                    .map(|c| cam.probe_pose(&c));
            }
            let weighted = |p: Option<Pose>| p.map(|pose| WeightedPose { pose, weight: 1.0 });
            let estimates = mode
                .breakdown()
                .iter()
                .map(|&m| {
                    let e = match m {
                        CameraMode::Left => per_cam[0],
                        CameraMode::Right => per_cam[1],
                        CameraMode::Dual => fuse_weighted(weighted(per_cam[0]), weighted(per_cam[1]))
                            .ok()
                            .map(|f| f.pose),
                    };
                    (m, e)
                })
                .collect();
            Ok(WaypointRecord {
                idx,
                stamp: wp.stamp,
                truth: wp.pose,
                estimates,
                iterations: 0,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let label = RunLabel {
        trajectory: traj.kind.to_string(),
        profile: format!("pixel_noise_{pixel_noise_px}px"),
        method: "planar_pnp".into(),
        mode,
        seed,
    };
    let report = ErrorReport::from_records(&label, &records);
    Ok(ExperimentOutput { report, records })
}

fn fiducial_pnp(
    ws: &Workspace,
    cam: &RigCamera,
    world_from_camera: &Pose,
    grid: usize,
    noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Pose, HarnessError> {
    let k = &cam.intrinsics;
    let plane = ws.plane.in_camera(world_from_camera);
    let mut corr = Vec::with_capacity(grid * grid);
    let margin = 16.0;
    for i in 0..grid {
        for j in 0..grid {
            let u = margin + (k.width as f64 - 2.0 * margin) * i as f64 / (grid - 1) as f64;
            let v = margin + (k.height as f64 - 2.0 * margin) * j as f64 / (grid - 1) as f64;
            let Some(x_cam) = plane.back_project(k, &Vector2::new(u, v)) else {
                continue;
            };
            let world = world_from_camera.transform_point(&x_cam);
            let px = project(k, &x_cam)?;
            let noisy = px + Vector2::new(noise.sample(rng), noise.sample(rng));
            corr.push((world.xy(), noisy));
        }
    }
    Ok(planar_pnp(&corr, k)?)
}

/// One trial of a fixed-offset convergence suite.
#[derive(Clone, Debug)]
pub struct OffsetTrial {
    pub truth: Pose,
    pub camera: usize,
    /// Mean absolute difference between the restored view and the clean
    /// render over the pattern-visible pixels.
    pub restoration_mae: Option<f64>,
    pub result: Result<ServoResult, String>,
}

impl OffsetTrial {
    /// Translation (m) and rotation (rad) error of a converged session.
    pub fn error(&self) -> Option<(f64, f64)> {
        self.result
            .as_ref()
            .ok()
            .filter(|r| r.converged)
            .map(|r| r.pose.distance_to(&self.truth))
    }
}

/// Random target poses, alternating cameras, each servoed from an initial
/// pose displaced by exactly `(trans_mm, rot_deg)`. With `occlusion_area`
/// the observed frame carries one random occluder of that area fraction;
/// poses, cameras and initial offsets depend only on `seed`.
pub fn run_offset_suite(
    ws: &Workspace,
    trials: usize,
    trans_mm: f64,
    rot_deg: f64,
    occlusion_area: Option<f64>,
    servo: &ServoConfig,
    seed: u64,
) -> Result<Vec<OffsetTrial>, HarnessError> {
    servo.validate()?;
    let cams = ws.rig.cameras.len();
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, 5));
            let truth = random_probe_pose(&mut rng);
            let init = random_offset(&truth, trans_mm * 1e-3, rot_deg.to_radians(), &mut rng);
            let side = i % cams;
            let cam = ws.camera(side)?;
            let clean = render_view_with(
                &cam.camera_pose(&truth),
                &cam.intrinsics,
                &ws.plane,
                &RenderOptions::default(),
            )?;
            let occ_seed: u64 = rng.random();
            let live = match occlusion_area {
                Some(frac) if frac > 0.0 => {
                    let mut orng = ChaCha8Rng::seed_from_u64(occ_seed);
                    let occ = random_occlusion(&mut orng, clean.width(), clean.height(), frac);
                    inject_perturbation(&clean, &Perturbation::Occlusion(occ), orng.random())?
                }
                _ => clean.clone(),
            };
            let view = restore_with_index(&live, &ws.index, &ws.restore);
            let (restoration_mae, result) = match view {
                Ok(view) => {
                    let visible: Vec<bool> =
                        clean.data().chunks(3).map(|p| p.iter().any(|&c| c > 0)).collect();
                    let mae = crate::image::mean_abs_diff(&view.image, &clean, Some(&visible));
                    let opts = SessionOptions::default();
                    let result = detect_and_describe(&view.image, &opts.detector)
                        .map_err(HarnessError::from)
                        .and_then(|t| {
                            Ok(run_session_with(&t, cam, &ws.plane, &init, servo, &opts)?)
                        })
                        .map_err(|e| e.to_string());
                    (mae, result)
                }
                Err(e) => (None, Err(e.to_string())),
            };
            Ok(OffsetTrial {
                truth,
                camera: side,
                restoration_mae,
                result,
            })
        })
        .collect()
}
