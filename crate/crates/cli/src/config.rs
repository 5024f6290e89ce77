//! `RunConfig`: the JSON file shared by `estimate`, `calibrate` and
//! `eval-traj`. Command-line flags override its fields.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use probepose::harness::{ExperimentConfig, InitStrategy, PerturbationProfile, Workspace, STANDARD_EXTENT};
use probepose::image::pattern::{generate_pattern, PatternParams};
use probepose::image::ImageBuffer;
use probepose::restoration::RestoreConfig;
use probepose::servo::ServoConfig;
use probepose::simcam::{CameraRig, PlaneSpec, RigFile};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Servo gains and stopping rule in human units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServoParams {
    pub lambda_t: f64,
    pub lambda_r: f64,
    pub trans_tol_mm: f64,
    pub rot_tol_deg: f64,
    pub max_iter: usize,
}

impl Default for ServoParams {
    fn default() -> Self {
        let d = ServoConfig::default();
        Self {
            lambda_t: d.lambda_t,
            lambda_r: d.lambda_r,
            trans_tol_mm: d.trans_tol * 1e3,
            rot_tol_deg: d.rot_tol.to_degrees(),
            max_iter: d.max_iter,
        }
    }
}

impl ServoParams {
    pub fn to_config(self) -> ServoConfig {
        ServoConfig {
            lambda_t: self.lambda_t,
            lambda_r: self.lambda_r,
            trans_tol: self.trans_tol_mm * 1e-3,
            rot_tol: self.rot_tol_deg.to_radians(),
            max_iter: self.max_iter,
            ..ServoConfig::default()
        }
    }
}

/// A named built-in profile or a full inline definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Named(String),
    Inline(PerturbationProfile),
}

impl ProfileRef {
    pub fn resolve(&self) -> Result<PerturbationProfile, CliError> {
        let p = match self {
            ProfileRef::Named(n) => PerturbationProfile::by_name(n).map_err(CliError::usage)?,
            ProfileRef::Inline(p) => p.clone(),
        };
        p.validate().map_err(CliError::usage)?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Rig file; the built-in dual rig on the generated pattern when absent.
    #[serde(default)]
    pub rig: Option<PathBuf>,
    /// Overrides the rig file's pattern image.
    #[serde(default)]
    pub pattern: Option<PathBuf>,
    #[serde(default)]
    pub servo: ServoParams,
    #[serde(default = "default_init")]
    pub init: InitStrategy,
    #[serde(default = "default_profile")]
    pub profile: ProfileRef,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_init() -> InitStrategy {
    InitStrategy::Restoration
}

fn default_profile() -> ProfileRef {
    ProfileRef::Named("clean".into())
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rig: None,
            pattern: None,
            servo: ServoParams::default(),
            init: default_init(),
            profile: default_profile(),
            seed: 0,
            out_dir: None,
        }
    }
}

impl RunConfig {
    /// Loads a config; relative paths resolve against its directory and
    /// must exist.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::from_err)?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.rig, &mut cfg.pattern].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
            if !p.exists() {
                return Err(CliError::usage(format!("referenced file {} does not exist", p.display())));
            }
        }
        if let Some(o) = &mut cfg.out_dir {
            if o.is_relative() {
                *o = dir.join(&*o);
            }
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn experiment(&self, seed: u64) -> Result<ExperimentConfig, CliError> {
        let servo = self.servo.to_config();
        servo.validate().map_err(CliError::usage)?;
        Ok(ExperimentConfig { servo, init: self.init, seed })
    }

    pub fn workspace(&self) -> Result<Workspace, CliError> {
        load_workspace(self.rig.as_deref(), self.pattern.as_deref())
    }
}

/// Builds the workspace from a rig file and/or a pattern image; the
/// generated pattern on the standard extent with the built-in rig otherwise.
pub fn load_workspace(rig: Option<&Path>, pattern: Option<&Path>) -> Result<Workspace, CliError> {
    let file = rig
        .map(|p| RigFile::load(p).map_err(CliError::from_err))
        .transpose()?;
    let pattern_path = pattern.map(Path::to_path_buf).or_else(|| {
        let (f, r) = (file.as_ref()?, rig?);
        let p = &f.workspace.pattern;
        Some(if p.is_absolute() {
            p.clone()
        } else {
            r.parent().unwrap_or(Path::new(".")).join(p)
        })
    });
    let image = match pattern_path {
        Some(p) => ImageBuffer::load_png(p).map_err(CliError::from_err)?,
        None => generate_pattern(&PatternParams::default()),
    };
    let (cameras, extent, center) = match &file {
        Some(f) => (f.rig().map_err(CliError::from_err)?, f.workspace.extent_m, f.workspace.center_m),
        None => (CameraRig::default_dual(), STANDARD_EXTENT, [0.0, 0.0]),
    };
    if !(extent[0] > 0.0 && extent[1] > 0.0) {
        return Err(CliError::usage("workspace extent must be positive"));
    }
    let plane = PlaneSpec {
        pattern: Arc::new(image),
        extent,
        center,
    };
    Workspace::new(plane, cameras, RestoreConfig::default()).map_err(CliError::from_err)
}
