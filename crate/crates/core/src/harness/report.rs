use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CameraMode, ExperimentOutput, RunLabel, WaypointRecord};
use crate::geometry::{write_pose_csv, StampedPose};
use crate::sim2real::Sim2RealCorrection;

/// Average, population standard deviation and maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub avg: f64,
    pub std: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let avg = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - avg) * (v - avg)).sum::<f64>() / n;
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(Stats {
            avg,
            std: var.sqrt(),
            max,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    pub mode: CameraMode,
    pub samples: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub translation_mm: Option<Stats>,
    pub rotation_deg: Option<Stats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub pairs: usize,
    pub loss: f64,
    pub zeta: f64,
}

impl From<&Sim2RealCorrection> for CalibrationSummary {
    fn from(c: &Sim2RealCorrection) -> Self {
        Self {
            pairs: c.pairs,
            loss: c.loss,
            zeta: c.zeta,
        }
    }
}

/// Aggregate errors of one run; serialized as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub trajectory: String,
    pub profile: String,
    pub method: String,
    pub mode: CameraMode,
    pub seed: u64,
    pub waypoints: usize,
    /// Stats of `mode`; also present in `breakdown`.
    pub summary: ModeStats,
    pub breakdown: Vec<ModeStats>,
    pub mean_iterations: f64,
    pub calibration: Option<CalibrationSummary>,
}

/// One line of `errors.csv`; errors are `None` for a failed waypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub idx: usize,
    pub trans_mm: Option<f64>,
    pub rot_deg: Option<f64>,
    pub mode: CameraMode,
    pub converged: bool,
}

pub fn error_rows(records: &[WaypointRecord]) -> Vec<ErrorRow> {
    let mut rows = Vec::new();
    for r in records {
        for (mode, est) in &r.estimates {
            let (t, d) = match est {
                Some(p) => {
                    let (dt, dr) = p.distance_to(&r.truth);
                    (Some(dt * 1e3), Some(dr.to_degrees()))
                }
                None => (None, None),
            };
            rows.push(ErrorRow {
                idx: r.idx,
                trans_mm: t,
                rot_deg: d,
                mode: *mode,
                converged: est.is_some(),
            });
        }
    }
    rows
}

pub(crate) fn mode_stats(rows: &[ErrorRow], mode: CameraMode) -> ModeStats {
    let sel: Vec<&ErrorRow> = rows.iter().filter(|r| r.mode == mode).collect();
    let ok: Vec<&&ErrorRow> = sel.iter().filter(|r| r.converged).collect();
    let t: Vec<f64> = ok.iter().filter_map(|r| r.trans_mm).collect();
    let d: Vec<f64> = ok.iter().filter_map(|r| r.rot_deg).collect();
    let failures = sel.len() - ok.len();
    ModeStats {
        mode,
        samples: sel.len(),
        failures,
        failure_rate: if sel.is_empty() { 0.0 } else { failures as f64 / sel.len() as f64 },
        translation_mm: Stats::of(&t),
        rotation_deg: Stats::of(&d),
    }
}

impl ErrorReport {
    pub fn from_records(label: &RunLabel, records: &[WaypointRecord]) -> Self {
        let rows = error_rows(records);
        let modes = label.mode.breakdown();
        let breakdown: Vec<ModeStats> = modes.iter().map(|&m| mode_stats(&rows, m)).collect();
        let summary = mode_stats(&rows, label.mode);
        let mean_iterations = if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.iterations as f64).sum::<f64>() / records.len() as f64
        };
        Self {
            trajectory: label.trajectory.clone(),
            profile: label.profile.clone(),
            method: label.method.clone(),
            mode: label.mode,
            seed: label.seed,
            waypoints: records.len(),
            summary,
            breakdown,
            mean_iterations,
            calibration: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes") + "\n"
    }
}

pub fn write_errors_csv<W: Write>(mut w: W, rows: &[ErrorRow]) -> std::io::Result<()> {
    writeln!(w, "idx,trans_mm,rot_deg,camera_mode,converged")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.idx,
            opt(r.trans_mm),
            opt(r.rot_deg),
            r.mode,
            r.converged
        )?;
    }
    Ok(())
}

/// Parses `errors.csv` back into rows.
pub fn read_errors_csv(text: &str) -> Result<Vec<ErrorRow>, String> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(format!("line {}: expected 5 fields", i + 1));
        }
        let num = |s: &str| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| format!("line {}: {e}", i + 1))
            }
        };
        rows.push(ErrorRow {
            idx: f[0].parse().map_err(|e| format!("line {}: {e}", i + 1))?,
            trans_mm: num(f[1])?,
            rot_deg: num(f[2])?,
            mode: f[3].parse().map_err(|e| format!("line {}: {e}", i + 1))?,
            converged: f[4].parse().map_err(|e| format!("line {}: {e}", i + 1))?,
        });
    }
    Ok(rows)
}

/// Writes `report.json`, `poses_gt.csv`, `poses_est.csv`, `errors.csv`,
/// `trajectory.svg` and `errors.svg` into `dir`.
pub fn write_outputs(dir: &Path, out: &ExperimentOutput) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), out.report.to_json())?;
    let mode = out.report.mode;
    let gt: Vec<StampedPose> = out
        .records
        .iter()
        .map(|r| StampedPose { stamp: r.stamp, pose: r.truth })
        .collect();
    let est: Vec<StampedPose> = out
        .records
        .iter()
        .filter_map(|r| {
            r.estimates
                .iter()
                .find(|(m, _)| *m == mode)
                .and_then(|(_, p)| *p)
                .map(|pose| StampedPose { stamp: r.stamp, pose })
        })
        .collect();
    write_pose_csv(fs::File::create(dir.join("poses_gt.csv"))?, &gt)?;
    write_pose_csv(fs::File::create(dir.join("poses_est.csv"))?, &est)?;
    let rows = error_rows(&out.records);
    write_errors_csv(fs::File::create(dir.join("errors.csv"))?, &rows)?;
    fs::write(dir.join("trajectory.svg"), trajectory_svg(&gt, &est))?;
    fs::write(dir.join("errors.svg"), error_svg(&out.records, mode))?;
    Ok(())
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 40.0;

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let mut s = String::new();
    for (x, y) in points {
        let _ = write!(s, "{x:.2},{y:.2} ");
    }
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", s.trim_end())
}

fn frame(title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{PAD}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n{body}</svg>\n"
    )
}

/// Top view (x/y, mm) of ground truth (black) and estimates (red).
fn trajectory_svg(gt: &[StampedPose], est: &[StampedPose]) -> String {
    let all: Vec<(f64, f64)> = gt
        .iter()
        .chain(est)
        .map(|p| (p.pose.translation.x * 1e3, p.pose.translation.y * 1e3))
        .collect();
    if all.is_empty() {
        return frame("trajectory (no data)", "");
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-6);
    let s = (W.min(H) - 2.0 * PAD) / span;
    let map = |x: f64, y: f64| (PAD + (x - x0) * s, H - PAD - (y - y0) * s);
    let g: Vec<_> = gt.iter().map(|p| map(p.pose.translation.x * 1e3, p.pose.translation.y * 1e3)).collect();
    let mut body = polyline(&g, "black");
    for p in est {
        let (x, y) = map(p.pose.translation.x * 1e3, p.pose.translation.y * 1e3);
        let _ = writeln!(body, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2\" fill=\"red\"/>");
    }
    frame("trajectory top view, mm (black: ground truth, red: estimate)", &body)
}

/// Per-axis translation error (mm) along the trajectory.
fn error_svg(records: &[WaypointRecord], mode: CameraMode) -> String {
    let mut axes: [Vec<(f64, f64)>; 3] = [vec![], vec![], vec![]];
    for r in records {
        if let Some(Some(p)) = r.estimates.iter().find(|(m, _)| *m == mode).map(|(_, p)| p) {
            let d = (p.translation - r.truth.translation) * 1e3;
            for a in 0..3 {
                axes[a].push((r.idx as f64, d[a]));
            }
        }
    }
    let n = records.len().max(2) as f64 - 1.0;
    let m = axes
        .iter()
        .flatten()
        .map(|(_, e)| e.abs())
        .fold(1e-3, f64::max);
    let map = |i: f64, e: f64| (PAD + i / n * (W - 2.0 * PAD), H / 2.0 - e / m * (H / 2.0 - PAD));
    let mut body = polyline(&[map(0.0, 0.0), map(n, 0.0)], "#bbbbbb");
    for (a, color) in ["red", "green", "blue"].iter().enumerate() {
        let pts: Vec<_> = axes[a].iter().map(|&(i, e)| map(i, e)).collect();
        body += &polyline(&pts, color);
    }
    frame(&format!("translation error per axis, mm (x red, y green, z blue; full scale ±{m:.3})"), &body)
}
