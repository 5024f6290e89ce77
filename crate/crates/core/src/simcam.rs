//! Pinhole camera simulator: projection, plane-induced homographies and a
//! per-pixel ray-casting renderer of the textured workspace plane.
//!
//! The renderer intersects every pixel ray with the plane independently of
//! the homography code, so the two act as cross-checks of each other.
//!
//! Frames: camera `+z` is the optical axis, `+x` right, `+y` down in the
//! image. The workspace plane is `z = 0` in the world frame with the pattern
//! on its `+z` side.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Rotation};
use crate::image::{to_rgb, ImageBuffer, ImageError};
use crate::registration::Homography;

#[derive(Debug, thiserror::Error)]
pub enum SimcamError {
    #[error("point is behind the camera (z = {0:e})")]
    BehindCamera(f64),
    #[error("camera center lies on the plane")]
    DegeneratePlane,
    #[error("no pixel ray hits the workspace plane")]
    DegeneratePose,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid rig config: {0}")]
    Config(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    #[serde(default)]
    pub skew: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Intrinsics {
    /// 640x360 raster with an 83° horizontal field of view.
    fn default() -> Self {
        let f = 320.0 / 41.5f64.to_radians().tan();
        Self {
            fx: f,
            fy: f,
            skew: 0.0,
            cx: 320.0,
            cy: 180.0,
            width: 640,
            height: 360,
        }
    }
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), SimcamError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width >= 1
            && self.height >= 1
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64
            && self.skew.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SimcamError::InvalidIntrinsics(format!("{self:?}")))
        }
    }

    pub fn k(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn k_inv(&self) -> Matrix3<f64> {
        let (fx, fy, s, cx, cy) = (self.fx, self.fy, self.skew, self.cx, self.cy);
        Matrix3::new(
            1.0 / fx,
            -s / (fx * fy),
            (s * cy - cx * fy) / (fx * fy),
            0.0,
            1.0 / fy,
            -cy / fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Ray direction (not normalized, `z = 1`) through a pixel.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        self.k_inv() * Vector3::new(u, v, 1.0)
    }
}

/// `p = K x / z`.
pub fn project(k: &Intrinsics, x_cam: &Vector3<f64>) -> Result<Vector2<f64>, SimcamError> {
    if x_cam.z <= 1e-9 {
        return Err(SimcamError::BehindCamera(x_cam.z));
    }
    let p = k.k() * x_cam;
    Ok(Vector2::new(p.x / p.z, p.y / p.z))
}

/// Plane `{X : -nᵀX = d}` expressed in some camera frame; `n` points from the
/// plane toward the camera and `d > 0` is the camera-to-plane distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneInCamera {
    pub normal: Vector3<f64>,
    pub distance: f64,
}

impl PlaneInCamera {
    /// Intersects the pixel ray with the plane.
    pub fn back_project(&self, k: &Intrinsics, pixel: &Vector2<f64>) -> Option<Vector3<f64>> {
        let ray = k.ray(pixel.x, pixel.y);
        let denom = -self.normal.dot(&ray);
        if denom <= 1e-12 {
            return None;
        }
        Some(ray * (self.distance / denom))
    }
}

/// The textured workspace: a pattern image laid on the world plane `z = 0`.
#[derive(Clone, Debug)]
pub struct PlaneSpec {
    pub pattern: Arc<ImageBuffer>,
    /// Physical size `(x, y)` in meters.
    pub extent: [f64; 2],
    /// World position of the pattern center.
    pub center: [f64; 2],
}

impl PlaneSpec {
    pub fn new(pattern: Arc<ImageBuffer>, extent: [f64; 2]) -> Self {
        Self {
            pattern,
            extent,
            center: [0.0, 0.0],
        }
    }

    fn pitch(&self) -> (f64, f64) {
        (
            self.extent[0] / self.pattern.width() as f64,
            self.extent[1] / self.pattern.height() as f64,
        )
    }

    /// Affine map from pattern pixels to world `(X, Y, 1)`. Pattern rows run
    /// toward world `-Y` so the image reads upright from above.
    pub fn pattern_to_world(&self) -> Matrix3<f64> {
        let (px, py) = self.pitch();
        let x0 = self.center[0] - 0.5 * self.extent[0] + 0.5 * px;
        let y0 = self.center[1] + 0.5 * self.extent[1] - 0.5 * py;
        Matrix3::new(px, 0.0, x0, 0.0, -py, y0, 0.0, 0.0, 1.0)
    }

    pub fn world_to_pattern(&self, x: f64, y: f64) -> (f64, f64) {
        let (px, py) = self.pitch();
        let x0 = self.center[0] - 0.5 * self.extent[0] + 0.5 * px;
        let y0 = self.center[1] + 0.5 * self.extent[1] - 0.5 * py;
        ((x - x0) / px, (y0 - y) / py)
    }

    /// The plane as seen from a camera at `world_from_camera`.
    pub fn in_camera(&self, world_from_camera: &Pose) -> PlaneInCamera {
        let up = Vector3::z();
        let normal = world_from_camera.rotation.inverse().rotate(&up);
        PlaneInCamera {
            normal,
            distance: world_from_camera.translation.z,
        }
    }

    /// Homography taking pattern pixels to image pixels of a camera at
    /// `world_from_camera`.
    pub fn pattern_to_image(&self, k: &Intrinsics, world_from_camera: &Pose) -> Matrix3<f64> {
        let cam_from_world = world_from_camera.inverse();
        let r = cam_from_world.rotation.matrix();
        let t = cam_from_world.translation;
        let m = Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), t]);
        let h = k.k() * m * self.pattern_to_world();
        h / h[(2, 2)]
    }
}

/// Homography `H_{S→G}` induced by the plane between camera `S` and camera
/// `G`, where `rel` is the pose of `G` expressed in `S` (`x_S = R x_G + t`)
/// and `plane` is given in `S`. Normalized so `H[2,2] = 1`.
pub fn plane_homography(
    k: &Intrinsics,
    rel: &Pose,
    plane: &PlaneInCamera,
) -> Result<Homography, SimcamError> {
    if plane.distance <= 0.0 {
        return Err(SimcamError::DegeneratePlane);
    }
    let t = rel.translation;
    if (plane.normal.dot(&t) + plane.distance).abs() < 1e-9 {
        return Err(SimcamError::DegeneratePlane);
    }
    let r = rel.rotation.matrix();
    let m = r.transpose() * (Matrix3::identity() + t * plane.normal.transpose() / plane.distance);
    let h = k.k() * m * k.k_inv();
    if h[(2, 2)].abs() < 1e-15 {
        return Err(SimcamError::DegeneratePlane);
    }
    Homography::new(h, "sim", "target").map_err(|_| SimcamError::DegeneratePlane)
}

/// Rendering options beyond the ideal pinhole.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RenderOptions {
    /// Std-dev (pixels) of i.i.d. Gaussian jitter of each pixel's sampling
    /// position.
    pub pixel_jitter: f64,
    pub seed: u64,
}

/// Renders the workspace seen by a camera at `world_from_camera`.
pub fn render_view(
    world_from_camera: &Pose,
    k: &Intrinsics,
    plane: &PlaneSpec,
) -> Result<ImageBuffer, SimcamError> {
    render_view_with(world_from_camera, k, plane, &RenderOptions::default())
}

pub fn render_view_with(
    world_from_camera: &Pose,
    k: &Intrinsics,
    plane: &PlaneSpec,
    opts: &RenderOptions,
) -> Result<ImageBuffer, SimcamError> {
    k.validate()?;
    let c = world_from_camera.translation;
    if c.z <= 1e-9 {
        return Err(SimcamError::DegeneratePose);
    }
    let r = world_from_camera.rotation.matrix();
    let k_inv = k.k_inv();
    // Rays through pixel centers, rotated into the world; a ray hits z = 0
    // when its world z component is negative.
    let pattern = plane.pattern.as_ref();
    let sample = |u: f64, v: f64| -> Option<[u8; 3]> {
        let d = r * (k_inv * Vector3::new(u, v, 1.0));
        if d.z >= -1e-12 {
            return None;
        }
        let s = -c.z / d.z;
        let (pu, pv) = plane.world_to_pattern(c.x + s * d.x, c.y + s * d.y);
        pattern.sample_bilinear(pu, pv).map(to_rgb)
    };
    let any_hit = [
        (0.0, 0.0),
        (k.width as f64 - 1.0, 0.0),
        (0.0, k.height as f64 - 1.0),
        (k.width as f64 - 1.0, k.height as f64 - 1.0),
        (k.cx, k.cy),
    ]
    .iter()
    .any(|&(u, v)| (r * (k_inv * Vector3::new(u, v, 1.0))).z < -1e-12);
    if !any_hit {
        return Err(SimcamError::DegeneratePose);
    }
    let img = if opts.pixel_jitter > 0.0 {
        let normal = Normal::new(0.0, opts.pixel_jitter).expect("jitter validated");
        let width = k.width;
        ImageBuffer::from_fn(k.width, k.height, |x, y| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                opts.seed ^ ((y * width + x) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let du = normal.sample(&mut rng);
            let dv = normal.sample(&mut rng);
            sample(x as f64 + du, y as f64 + dv).unwrap_or([0, 0, 0])
        })
    } else {
        ImageBuffer::from_fn(k.width, k.height, |x, y| {
            sample(x as f64, y as f64).unwrap_or([0, 0, 0])
        })
    };
    Ok(img)
}

/// One camera of the rig.
#[derive(Clone, Debug, PartialEq)]
pub struct RigCamera {
    pub name: String,
    pub intrinsics: Intrinsics,
    /// Camera pose in the probe frame (`probe_from_camera`).
    pub extrinsic: Pose,
}

impl RigCamera {
    pub fn camera_pose(&self, world_from_probe: &Pose) -> Pose {
        *world_from_probe * self.extrinsic
    }

    pub fn probe_pose(&self, world_from_camera: &Pose) -> Pose {
        *world_from_camera * self.extrinsic.inverse()
    }
}

/// One or two probe-mounted cameras.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    pub cameras: Vec<RigCamera>,
}

impl CameraRig {
    /// Dual-camera holder: left at roll/pitch/yaw (30°, 10°, 0°), right at
    /// (-30°, 10°, 180°), both 0.05 m behind the probe tip and ±0.03 m to the
    /// side.
    pub fn default_dual() -> Self {
        let k = Intrinsics::default();
        let deg = f64::to_radians;
        Self {
            cameras: vec![
                RigCamera {
                    name: "left".into(),
                    intrinsics: k,
                    extrinsic: Pose::new(
                        Rotation::from_rpy(deg(30.0), deg(10.0), 0.0),
                        Vector3::new(-0.03, 0.0, -0.05),
                    ),
                },
                RigCamera {
                    name: "right".into(),
                    intrinsics: k,
                    extrinsic: Pose::new(
                        Rotation::from_rpy(deg(-30.0), deg(10.0), deg(180.0)),
                        Vector3::new(0.03, 0.0, -0.05),
                    ),
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), SimcamError> {
        if self.cameras.is_empty() || self.cameras.len() > 2 {
            return Err(SimcamError::Config(format!(
                "rig must have 1 or 2 cameras, found {}",
                self.cameras.len()
            )));
        }
        for c in &self.cameras {
            c.intrinsics.validate()?;
        }
        Ok(())
    }

    pub fn camera(&self, name: &str) -> Option<&RigCamera> {
        self.cameras.iter().find(|c| c.name == name)
    }
}

/// On-disk rig description. Lengths in meters, angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigFile {
    pub cameras: Vec<RigFileCamera>,
    pub workspace: WorkspaceFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigFileCamera {
    pub name: String,
    pub intrinsics: Intrinsics,
    pub translation_m: [f64; 3],
    /// Roll, pitch, yaw in degrees, applied as `Rz(yaw) Ry(pitch) Rx(roll)`.
    pub rpy_deg: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceFile {
    pub extent_m: [f64; 2],
    #[serde(default)]
    pub center_m: [f64; 2],
    /// Pattern PNG, relative paths resolve against the rig file directory.
    pub pattern: PathBuf,
}

impl RigFile {
    pub fn from_rig(rig: &CameraRig, extent: [f64; 2], pattern: PathBuf) -> Self {
        let cameras = rig
            .cameras
            .iter()
            .map(|c| {
                let (r, p, y) = c.extrinsic.rotation.quaternion().euler_angles();
                RigFileCamera {
                    name: c.name.clone(),
                    intrinsics: c.intrinsics,
                    translation_m: c.extrinsic.translation.into(),
                    rpy_deg: [r.to_degrees(), p.to_degrees(), y.to_degrees()],
                }
            })
            .collect();
        Self {
            cameras,
            workspace: WorkspaceFile {
                extent_m: extent,
                center_m: [0.0, 0.0],
                pattern,
            },
        }
    }

    pub fn rig(&self) -> Result<CameraRig, SimcamError> {
        let cameras = self
            .cameras
            .iter()
            .map(|c| RigCamera {
                name: c.name.clone(),
                intrinsics: c.intrinsics,
                extrinsic: Pose::new(
                    Rotation::from_rpy(
                        c.rpy_deg[0].to_radians(),
                        c.rpy_deg[1].to_radians(),
                        c.rpy_deg[2].to_radians(),
                    ),
                    Vector3::from(c.translation_m),
                ),
            })
            .collect();
        let rig = CameraRig { cameras };
        rig.validate()?;
        Ok(rig)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimcamError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| SimcamError::Config(e.to_string()))
    }

    /// Loads the pattern image and builds the plane spec.
    pub fn plane(&self, rig_dir: &Path) -> Result<PlaneSpec, SimcamError> {
        let ws = &self.workspace;
        if !(ws.extent_m[0] > 0.0 && ws.extent_m[1] > 0.0) {
            return Err(SimcamError::Config("workspace extent must be positive".into()));
        }
        let path = if ws.pattern.is_absolute() {
            ws.pattern.clone()
        } else {
            rig_dir.join(&ws.pattern)
        };
        let pattern = ImageBuffer::load_png(path)?;
        Ok(PlaneSpec {
            pattern: Arc::new(pattern),
            extent: ws.extent_m,
            center: ws.center_m,
        })
    }
}
