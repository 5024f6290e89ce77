//! `probepose` command-line entry points. Lengths on the command line and in
//! printed output are millimeters and angles degrees; files keep the SI
//! units of their owning modules.

mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use probepose::fusion::{fuse, Side};
use probepose::geometry::{read_pose_csv, Pose, Rotation, StampedPose};
use probepose::harness::{
    calibrate_offsets, estimate_frames, generate_trajectory, observe, run_experiment, run_pnp_baseline,
    write_outputs, CameraMode, ExperimentOutput, Trajectory, TrajectoryKind, DEFAULT_SAMPLES,
    STANDARD_EXTENT,
};
use probepose::image::pattern::{generate_pattern, PatternParams};
use probepose::image::ImageBuffer;
use probepose::recon::{compound, volume_metrics, SlicePlacement, SliceSet, VoxelVolume};
use probepose::restoration::{restore_traced, save_side_by_side};
use probepose::servo::write_trace_csv;
use probepose::sim2real::{apply_correction, calibrate, CalibrationPair, Sim2RealCorrection, DEFAULT_ZETA};
use probepose::simcam::{CameraRig, RigFile};
use serde_json::json;

use config::{load_workspace, RunConfig};

/// A failure with its exit status and the name of the originating error.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    name: String,
    message: String,
}

impl CliError {
    pub fn usage(e: impl fmt::Display) -> Self {
        Self {
            code: 2,
            name: "Usage".into(),
            message: e.to_string(),
        }
    }

    pub fn from_err<E: std::error::Error>(e: E) -> Self {
        Self {
            code: 1,
            name: variant_path(&format!("{e:?}")),
            message: e.to_string(),
        }
    }
}

/// Nested enum variant names from a `Debug` rendering, outermost first:
/// `Restoration(RestorationFailed(TooFewMatches(3)))` gives
/// `Restoration/RestorationFailed/TooFewMatches`.
fn variant_path(debug: &str) -> String {
    let mut names = Vec::new();
    let mut rest = debug;
    loop {
        let end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        let ident = &rest[..end];
        if ident.is_empty() || !ident.starts_with(|c: char| c.is_ascii_uppercase()) {
            break;
        }
        names.push(ident);
        // io errors render their OS details, not variants
        if ident == "Io" || !rest[end..].starts_with('(') {
            break;
        }
        rest = &rest[end + 1..];
    }
    if names.is_empty() {
        "Error".into()
    } else {
        names.join("/")
    }
}

#[derive(Parser)]
#[command(name = "probepose", version, about = "Sim-in-the-loop pose estimation of a probe-mounted camera rig")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the workspace texture (and optionally a matching rig file).
    GenPattern(GenPatternArgs),
    /// Render the rig's views of the workspace at a probe pose.
    Render(RenderArgs),
    /// Replace a live frame by the registered ideal texture.
    Restore(RestoreArgs),
    /// Estimate the probe pose from one frame pair.
    Estimate(EstimateArgs),
    /// Solve the Sim2Real correction from pose pairs.
    Calibrate(CalibrateArgs),
    /// Run the pipeline along a trajectory and report errors.
    EvalTraj(EvalTrajArgs),
    /// Compound tracked binary slices into a voxel volume.
    Reconstruct(ReconstructArgs),
    /// Compare two voxel volumes.
    Metrics(MetricsArgs),
}

/// Where the workspace comes from.
#[derive(Args)]
struct WorkspaceArgs {
    /// Rig file (JSON); the built-in dual rig when omitted.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Pattern PNG overriding the rig's; the generated pattern when neither
    /// is given.
    #[arg(long)]
    pattern: Option<PathBuf>,
}

#[derive(Args)]
struct GenPatternArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = PatternParams::default().size_px)]
    size: usize,
    /// Mean cell spacing, pixels.
    #[arg(long, default_value_t = PatternParams::default().cell_px)]
    cell: f64,
    #[arg(long, default_value_t = PatternParams::default().seed)]
    seed: u64,
    /// Also write a rig file for the built-in dual rig on this pattern.
    #[arg(long)]
    rig_out: Option<PathBuf>,
    /// Workspace side length for the rig file, mm.
    #[arg(long, default_value_t = STANDARD_EXTENT[0] * 1e3)]
    extent_mm: f64,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    ws: WorkspaceArgs,
    /// Probe pose `x,y,z,roll,pitch,yaw` in mm and degrees.
    #[arg(long, allow_hyphen_values = true)]
    pose: String,
    /// Perturbation profile: clean, noisy or paperlike.
    #[arg(long, default_value = "clean")]
    profile: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; one `<camera>.png` per rig camera.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RestoreArgs {
    #[command(flatten)]
    ws: WorkspaceArgs,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write `live | restored` side by side.
    #[arg(long)]
    side_by_side: Option<PathBuf>,
    /// Dump the final registration's matches and inlier flags as JSON.
    #[arg(long)]
    matches: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// RunConfig JSON (rig, pattern, servo parameters).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    ws: WorkspaceArgs,
    /// Frame of the first rig camera.
    #[arg(long)]
    left: Option<PathBuf>,
    /// Frame of the second rig camera.
    #[arg(long)]
    right: Option<PathBuf>,
    /// Initial probe pose `x,y,z,roll,pitch,yaw` (mm, deg); from the
    /// restoration when omitted.
    #[arg(long, allow_hyphen_values = true)]
    init: Option<String>,
    /// Sim2Real correction applied to the fused pose.
    #[arg(long)]
    correction: Option<PathBuf>,
    /// Directory for per-camera servo traces.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// RunConfig JSON; used for the synthetic calibration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ground-truth pose file; pairs with `--estimates` row by row.
    #[arg(long, requires = "estimates")]
    truth: Option<PathBuf>,
    /// Pipeline estimates at the `--truth` poses.
    #[arg(long, requires = "truth")]
    estimates: Option<PathBuf>,
    /// Without pose files: run the pipeline at calibration poses under this
    /// profile (it must plant an offset) and calibrate from those.
    #[arg(long, conflicts_with = "truth")]
    profile: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rotation weight of the loss, meters per radian.
    #[arg(long, default_value_t = DEFAULT_ZETA)]
    zeta: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalTrajArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    ws: WorkspaceArgs,
    /// u_shape, spiral or custom.
    #[arg(long, default_value = "u_shape")]
    kind: String,
    /// Pose file for `--kind custom`.
    #[arg(long)]
    poses: Option<PathBuf>,
    /// left, right or dual.
    #[arg(long, default_value = "dual")]
    mode: String,
    /// Shorthand for `--profile clean`.
    #[arg(long, conflicts_with = "profile")]
    clean: bool,
    #[arg(long)]
    profile: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// servo or planar_pnp.
    #[arg(long, default_value = "servo")]
    method: String,
    /// Fiducials per side for planar_pnp.
    #[arg(long, default_value_t = 10)]
    grid: usize,
    /// Skip Sim2Real calibration even when the profile plants an offset.
    #[arg(long)]
    no_correction: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Directory of binary mask PNGs, taken in file-name order.
    #[arg(long)]
    masks: PathBuf,
    /// Probe poses, one record per mask.
    #[arg(long)]
    poses: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pitch_mm: f64,
    /// Image pixel size, mm.
    #[arg(long, default_value_t = 0.1)]
    pixel_mm: f64,
    /// Probe-frame position of the image's top-center, `x,y,z` mm.
    #[arg(long, default_value = "0,0,0", allow_hyphen_values = true)]
    top_center_mm: String,
    /// Output volume header; packed bits go to `<out>.bits`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    a: PathBuf,
    b: PathBuf,
}

fn parse_floats<const N: usize>(s: &str, what: &str) -> Result<[f64; N], CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::usage(format!("{what}: {e}")))?;
    v.try_into()
        .map_err(|_| CliError::usage(format!("{what}: expected {N} comma-separated numbers")))
}

/// `x,y,z,roll,pitch,yaw` in mm and degrees.
fn parse_pose(s: &str) -> Result<Pose, CliError> {
    let [x, y, z, r, p, w] = parse_floats::<6>(s, "pose")?;
    Ok(Pose::new(
        Rotation::from_rpy(r.to_radians(), p.to_radians(), w.to_radians()),
        Vector3::new(x, y, z) * 1e-3,
    ))
}

fn pose_json(p: &Pose) -> serde_json::Value {
    let t = p.translation * 1e3;
    let (r, pi, y) = p.rotation.quaternion().euler_angles();
    let [qw, qx, qy, qz] = p.rotation.wxyz();
    json!({
        "x_mm": t.x, "y_mm": t.y, "z_mm": t.z,
        "roll_deg": r.to_degrees(), "pitch_deg": pi.to_degrees(), "yaw_deg": y.to_degrees(),
        "qw": qw, "qx": qx, "qy": qy, "qz": qz,
    })
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
}

fn read_poses(path: &Path) -> Result<Vec<StampedPose>, CliError> {
    let f = std::fs::File::open(path).map_err(CliError::from_err)?;
    read_pose_csv(std::io::BufReader::new(f)).map_err(CliError::from_err)
}

fn load_image(path: &Path) -> Result<ImageBuffer, CliError> {
    ImageBuffer::load_png(path).map_err(CliError::from_err)
}

fn gen_pattern(a: GenPatternArgs) -> Result<(), CliError> {
    let params = PatternParams {
        size_px: a.size,
        cell_px: a.cell,
        seed: a.seed,
        ..PatternParams::default()
    };
    if a.size < 16 || !(a.cell > 1.0) {
        return Err(CliError::usage("--size must be >= 16 and --cell > 1"));
    }
    let img = generate_pattern(&params);
    img.save_png(&a.out).map_err(CliError::from_err)?;
    if let Some(rig_out) = a.rig_out {
        if !(a.extent_mm > 0.0) {
            return Err(CliError::usage("--extent-mm must be positive"));
        }
        // reference the pattern relative to the rig file when possible
        let pattern = match (a.out.canonicalize(), rig_out.parent()) {
            (Ok(abs), Some(dir)) => {
                let dir = if dir.as_os_str().is_empty() { Path::new(".") } else { dir };
                dir.canonicalize()
                    .ok()
                    .and_then(|d| abs.strip_prefix(d).ok().map(Path::to_path_buf))
                    .unwrap_or(abs)
            }
            (Ok(abs), None) => abs,
            (Err(_), _) => a.out.clone(),
        };
        let e = a.extent_mm * 1e-3;
        let file = RigFile::from_rig(&CameraRig::default_dual(), [e, e], pattern);
        let text = serde_json::to_string_pretty(&file).expect("rig file serializes") + "\n";
        std::fs::write(&rig_out, text).map_err(CliError::from_err)?;
    }
    println!("wrote {} ({}x{})", a.out.display(), img.width(), img.height());
    Ok(())
}

fn render(a: RenderArgs) -> Result<(), CliError> {
    let pose = parse_pose(&a.pose)?;
    let profile = probepose::harness::PerturbationProfile::by_name(&a.profile).map_err(CliError::usage)?;
    let ws = load_workspace(a.ws.rig.as_deref(), a.ws.pattern.as_deref())?;
    std::fs::create_dir_all(&a.out_dir).map_err(CliError::from_err)?;
    // a planted offset would change the meaning of --pose; only image
    // degradations apply here
    let profile = probepose::harness::PerturbationProfile {
        planted_offset: None,
        ..profile
    };
    for (i, cam) in ws.rig.cameras.iter().enumerate() {
        let seed = probepose::harness::derive_seed(a.seed, i as u64, 2);
        let img = observe(&ws, cam, &pose, &profile, seed).map_err(CliError::from_err)?;
        let path = a.out_dir.join(format!("{}.png", cam.name));
        img.save_png(&path).map_err(CliError::from_err)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn restore(a: RestoreArgs) -> Result<(), CliError> {
    let ws = load_workspace(a.ws.rig.as_deref(), a.ws.pattern.as_deref())?;
    let live = load_image(&a.image)?;
    let (view, dump) = restore_traced(&live, &ws.index, &ws.restore).map_err(CliError::from_err)?;
    view.image.save_png(&a.out).map_err(CliError::from_err)?;
    if let Some(p) = &a.matches {
        let f = std::fs::File::create(p).map_err(CliError::from_err)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &dump)
            .map_err(|e| CliError::from_err(std::io::Error::other(e)))?;
    }
    if let Some(p) = &a.side_by_side {
        save_side_by_side(&live, &view, p).map_err(CliError::from_err)?;
    }
    let h = view.h_pattern_to_view.matrix();
    print_json(&json!({
        "inlier_ratio": view.inlier_ratio,
        "h_pattern_to_view": [
            [h[(0, 0)], h[(0, 1)], h[(0, 2)]],
            [h[(1, 0)], h[(1, 1)], h[(1, 2)]],
            [h[(2, 0)], h[(2, 1)], h[(2, 2)]],
        ],
    }));
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if a.ws.rig.is_some() {
        cfg.rig = a.ws.rig.clone();
    }
    if a.ws.pattern.is_some() {
        cfg.pattern = a.ws.pattern.clone();
    }
    if a.left.is_none() && a.right.is_none() {
        return Err(CliError::usage("give --left and/or --right"));
    }
    let servo = cfg.experiment(cfg.seed)?.servo;
    let init = a.init.as_deref().map(parse_pose).transpose()?;
    let correction = a
        .correction
        .as_deref()
        .map(|p| Sim2RealCorrection::load(p).map_err(CliError::from_err))
        .transpose()?;
    let ws = cfg.workspace()?;
    if a.right.is_some() && ws.rig.cameras.len() < 2 {
        return Err(CliError::usage("--right given but the rig has one camera"));
    }
    let frames = [
        a.left.as_deref().map(load_image).transpose()?,
        a.right.as_deref().map(load_image).transpose()?,
    ];
    let est = estimate_frames(&ws, [frames[0].as_ref(), frames[1].as_ref()], [init, init], &servo)
        .map_err(CliError::from_err)?;
    let mut sessions = Vec::new();
    for (side, s) in est.sessions.iter().enumerate() {
        let Some(s) = s else { continue };
        let name = &ws.rig.cameras[side].name;
        match s {
            Ok(r) => {
                if let Some(dir) = &a.trace_dir {
                    std::fs::create_dir_all(dir).map_err(CliError::from_err)?;
                    let f = std::fs::File::create(dir.join(format!("{name}_trace.csv")))
                        .map_err(CliError::from_err)?;
                    write_trace_csv(f, &r.trace).map_err(CliError::from_err)?;
                }
                sessions.push(json!({
                    "camera": name,
                    "converged": r.converged,
                    "iterations": r.iterations,
                    "weight": r.weight,
                    "pose": pose_json(&r.pose),
                }));
            }
            Err(e) => sessions.push(json!({ "camera": name, "error": e })),
        }
    }
    let get = |s: usize| est.sessions[s].as_ref().and_then(|r| r.as_ref().ok());
    let fused = match fuse(get(0), get(1)) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&sessions).expect("json"));
            return Err(CliError::from_err(e));
        }
    };
    let pose = correction.as_ref().map_or(fused.pose, |c| apply_correction(c, &fused.pose));
    let contributors: Vec<&str> = fused
        .contributors
        .iter()
        .map(|s| match s {
            Side::Left => "left",
            Side::Right => "right",
        })
        .collect();
    print_json(&json!({
        "pose": pose_json(&pose),
        "corrected": correction.is_some(),
        "contributors": contributors,
        "weights": [fused.weights.0, fused.weights.1],
        "sessions": sessions,
    }));
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<(), CliError> {
    if !(a.zeta > 0.0) {
        return Err(CliError::usage("--zeta must be positive"));
    }
    let correction = match (&a.truth, &a.estimates) {
        (Some(t), Some(e)) => {
            let (truth, est) = (read_poses(t)?, read_poses(e)?);
            if truth.len() != est.len() {
                return Err(CliError::usage(format!(
                    "{} truth poses but {} estimates",
                    truth.len(),
                    est.len()
                )));
            }
            let pairs: Vec<CalibrationPair> = truth
                .iter()
                .zip(&est)
                .map(|(m, n)| CalibrationPair { m: m.pose, n: n.pose })
                .collect();
            calibrate(&pairs, a.zeta).map_err(CliError::from_err)?
        }
        _ => {
            let cfg = RunConfig::load_or_default(a.config.as_deref())?;
            let profile = match &a.profile {
                Some(n) => config::ProfileRef::Named(n.clone()).resolve()?,
                None => cfg.profile.resolve()?,
            };
            if profile.planted_offset.is_none() {
                return Err(CliError::usage(format!(
                    "profile {:?} plants no offset; give --truth/--estimates or a profile with one",
                    profile.name
                )));
            }
            let exp = cfg.experiment(a.seed.unwrap_or(cfg.seed))?;
            let ws = cfg.workspace()?;
            calibrate_offsets(&ws, &profile, &exp).map_err(CliError::from_err)?
        }
    };
    correction.save(&a.out).map_err(CliError::from_err)?;
    print_json(&json!({
        "pairs": correction.pairs,
        "loss": correction.loss,
        "zeta": correction.zeta,
        "u": pose_json(&correction.u),
        "v": pose_json(&correction.v),
    }));
    Ok(())
}

fn eval_traj(a: EvalTrajArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if a.ws.rig.is_some() {
        cfg.rig = a.ws.rig.clone();
    }
    if a.ws.pattern.is_some() {
        cfg.pattern = a.ws.pattern.clone();
    }
    let kind: TrajectoryKind = a.kind.parse().map_err(CliError::usage)?;
    let mode: CameraMode = a.mode.parse().map_err(CliError::usage)?;
    let profile = if a.clean {
        config::ProfileRef::Named("clean".into()).resolve()?
    } else if let Some(p) = &a.profile {
        config::ProfileRef::Named(p.clone()).resolve()?
    } else {
        cfg.profile.resolve()?
    };
    let seed = a.seed.unwrap_or(cfg.seed);
    let out_dir = a
        .out
        .clone()
        .or(cfg.out_dir.clone())
        .ok_or_else(|| CliError::usage("give --out or out_dir in the config"))?;
    let traj = match kind {
        TrajectoryKind::Custom => {
            let path = a
                .poses
                .as_deref()
                .ok_or_else(|| CliError::usage("--kind custom needs --poses"))?;
            Trajectory::from_records(read_poses(path)?).map_err(CliError::from_err)?
        }
        _ => generate_trajectory(kind, a.samples).map_err(CliError::usage)?,
    };
    let exp = cfg.experiment(seed)?;
    let ws = cfg.workspace()?;
    let out: ExperimentOutput = match a.method.as_str() {
        "servo" => {
            let correction = match (profile.planted_offset, a.no_correction) {
                (Some(_), false) => Some(calibrate_offsets(&ws, &profile, &exp).map_err(CliError::from_err)?),
                _ => None,
            };
            let out = run_experiment(&traj, &ws, &profile, &exp, correction.as_ref(), mode)
                .map_err(CliError::from_err)?;
            if let Some(c) = &correction {
                std::fs::create_dir_all(&out_dir).map_err(CliError::from_err)?;
                c.save(out_dir.join("correction.json")).map_err(CliError::from_err)?;
            }
            out
        }
        "planar_pnp" => run_pnp_baseline(&traj, &ws, profile.pixel_noise_px, a.grid, seed, mode)
            .map_err(CliError::from_err)?,
        other => return Err(CliError::usage(format!("unknown method {other:?}"))),
    };
    write_outputs(&out_dir, &out).map_err(CliError::from_err)?;
    let s = &out.report.summary;
    let fmt = |st: Option<probepose::harness::Stats>| {
        st.map_or("n/a".to_string(), |x| format!("{:.4} ± {:.4} (max {:.4})", x.avg, x.std, x.max))
    };
    println!(
        "{} {} {} {}: {} waypoints, {} failed; trans_mm {}; rot_deg {}",
        out.report.method,
        out.report.trajectory,
        out.report.profile,
        mode,
        s.samples,
        s.failures,
        fmt(s.translation_mm),
        fmt(s.rotation_deg)
    );
    println!("wrote {}", out_dir.join("report.json").display());
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> Result<(), CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(&a.masks)
        .map_err(CliError::from_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    let poses = read_poses(&a.poses)?;
    if files.len() != poses.len() {
        return Err(CliError::usage(format!(
            "{} masks but {} poses",
            files.len(),
            poses.len()
        )));
    }
    if !(a.pitch_mm > 0.0 && a.pixel_mm > 0.0) {
        return Err(CliError::usage("--pitch-mm and --pixel-mm must be positive"));
    }
    let top = parse_floats::<3>(&a.top_center_mm, "--top-center-mm")?;
    let slices = files
        .iter()
        .zip(&poses)
        .map(|(f, p)| Ok((load_image(f)?, p.pose)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let set = SliceSet {
        slices,
        placement: SlicePlacement {
            top_center: top.map(|v| v * 1e-3),
            pixel_pitch: a.pixel_mm * 1e-3,
        },
    };
    let vol = compound(&set, a.pitch_mm * 1e-3).map_err(CliError::from_err)?;
    vol.save(&a.out).map_err(CliError::from_err)?;
    print_json(&json!({
        "slices": set.slices.len(),
        "dims": vol.dims,
        "occupied": vol.occupied_count(),
        "volume_mm3": vol.volume() * 1e9,
    }));
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let va = VoxelVolume::load(&a.a).map_err(CliError::from_err)?;
    let vb = VoxelVolume::load(&a.b).map_err(CliError::from_err)?;
    let m = volume_metrics(&va, &vb).map_err(CliError::from_err)?;
    print_json(&serde_json::to_value(m).expect("metrics serialize"));
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenPattern(a) => gen_pattern(a),
        Command::Render(a) => render(a),
        Command::Restore(a) => restore(a),
        Command::Estimate(a) => estimate(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::EvalTraj(a) => eval_traj(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Metrics(a) => metrics(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.name, e.message);
            ExitCode::from(e.code)
        }
    }
}
