//! Volume compounding of tracked binary slices and volume-comparison
//! metrics.
//!
//! Voxel centers sit on the global lattice `pitch · ℤ³`, so any two volumes
//! with the same pitch share a lattice and can be compared voxel by voxel.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
#[cfg(test)]
use crate::geometry::Rotation;
use crate::image::ImageBuffer;

pub const DEFAULT_VOXEL_PITCH: f64 = 0.5e-3;

#[derive(Debug, thiserror::Error)]
pub enum ReconError {
    #[error("no slices to compound")]
    EmptyInput,
    #[error("volume has no occupied voxels")]
    EmptyVolume,
    #[error("voxel pitch mismatch: {0} vs {1}")]
    PitchMismatch(f64, f64),
    #[error("invalid slice set: {0}")]
    InvalidSlices(String),
    #[error("invalid volume file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where the image plane sits in the probe frame. Image columns run along
/// probe `x`, rows along probe `z` (away from the probe face); `top_center`
/// is the probe-frame position of the middle of the first row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicePlacement {
    pub top_center: [f64; 3],
    /// Meters per pixel.
    pub pixel_pitch: f64,
}

impl Default for SlicePlacement {
    /// A 40 mm wide image at 0.1 mm/px starting at the probe tip.
    fn default() -> Self {
        Self {
            top_center: [0.0, 0.0, 0.0],
            pixel_pitch: 0.1e-3,
        }
    }
}

impl SlicePlacement {
    /// Probe-frame position of pixel `(u, v)` of an image `width` wide.
    pub fn pixel_to_probe(&self, u: f64, v: f64, width: usize) -> Vector3<f64> {
        let c = 0.5 * (width as f64 - 1.0);
        Vector3::from(self.top_center)
            + Vector3::new((u - c) * self.pixel_pitch, 0.0, v * self.pixel_pitch)
    }
}

/// Binary masks with the probe pose each was acquired at. A pixel is "on"
/// when its first channel is above 127.
#[derive(Clone, Debug)]
pub struct SliceSet {
    pub slices: Vec<(ImageBuffer, Pose)>,
    pub placement: SlicePlacement,
}

impl SliceSet {
    pub fn validate(&self) -> Result<(), ReconError> {
        let Some((first, _)) = self.slices.first() else {
            return Err(ReconError::EmptyInput);
        };
        if !(self.placement.pixel_pitch > 0.0) {
            return Err(ReconError::InvalidSlices("pixel pitch must be positive".into()));
        }
        let dims = (first.width(), first.height());
        if self.slices.iter().any(|(m, _)| (m.width(), m.height()) != dims) {
            return Err(ReconError::InvalidSlices("masks differ in size".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelVolume {
    /// Center of voxel `(0, 0, 0)`, meters.
    pub origin: Vector3<f64>,
    pub pitch: f64,
    pub dims: [usize; 3],
    /// x fastest, then y, then z.
    pub occupancy: Vec<bool>,
}

impl VoxelVolume {
    /// Builds the tightest volume holding the given lattice cells.
    pub fn from_cells(cells: &HashSet<[i64; 3]>, pitch: f64) -> Result<Self, ReconError> {
        if cells.is_empty() {
            return Err(ReconError::EmptyVolume);
        }
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for c in cells {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        let dims = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
        let mut occupancy = vec![false; dims[0] * dims[1] * dims[2]];
        for c in cells {
            let i = (c[0] - lo[0]) as usize
                + dims[0] * ((c[1] - lo[1]) as usize + dims[1] * (c[2] - lo[2]) as usize);
            occupancy[i] = true;
        }
        Ok(Self {
            origin: Vector3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64) * pitch,
            pitch,
            dims,
            occupancy,
        })
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|o| **o).count()
    }

    /// Occupied volume in cubic meters.
    pub fn volume(&self) -> f64 {
        self.occupied_count() as f64 * self.pitch.powi(3)
    }

    fn lattice_origin(&self) -> [i64; 3] {
        [0, 1, 2].map(|a| (self.origin[a] / self.pitch).round() as i64)
    }

    /// Global lattice coordinates of the occupied voxels.
    pub fn cells(&self) -> HashSet<[i64; 3]> {
        let o = self.lattice_origin();
        let [nx, ny, _] = self.dims;
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(|(i, _)| {
                let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
                [o[0] + x as i64, o[1] + y as i64, o[2] + z as i64]
            })
            .collect()
    }

    /// Centers of the occupied voxels, meters.
    pub fn points(&self) -> Vec<[f64; 3]> {
        let mut cells: Vec<[i64; 3]> = self.cells().into_iter().collect();
        cells.sort_unstable();
        cells
            .iter()
            .map(|c| c.map(|v| v as f64 * self.pitch))
            .collect()
    }

    /// Writes the JSON header to `path` and the packed bits next to it
    /// (`<path>.bits`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ReconError> {
        let path = path.as_ref();
        let bits_path = bits_path(path);
        let header = VolumeHeader {
            origin_m: self.origin.into(),
            pitch_m: self.pitch,
            dims: self.dims,
            data: PathBuf::from(bits_path.file_name().expect("file path")),
        };
        let mut packed = vec![0u8; self.occupancy.len().div_ceil(8)];
        for (i, &v) in self.occupancy.iter().enumerate() {
            if v {
                packed[i / 8] |= 1 << (i % 8);
            }
        }
        fs::write(path, serde_json::to_string_pretty(&header).expect("plain data") + "\n")?;
        fs::write(bits_path, packed)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReconError> {
        let path = path.as_ref();
        let header: VolumeHeader = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| ReconError::Format(e.to_string()))?;
        if !(header.pitch_m > 0.0) {
            return Err(ReconError::Format("pitch must be positive".into()));
        }
        let data = if header.data.is_absolute() {
            header.data.clone()
        } else {
            path.parent().unwrap_or(Path::new(".")).join(&header.data)
        };
        let packed = fs::read(data)?;
        let n = header.dims.iter().product::<usize>();
        if packed.len() != n.div_ceil(8) {
            return Err(ReconError::Format(format!(
                "expected {} data bytes, found {}",
                n.div_ceil(8),
                packed.len()
            )));
        }
        let occupancy = (0..n).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self {
            origin: Vector3::from(header.origin_m),
            pitch: header.pitch_m,
            dims: header.dims,
            occupancy,
        })
    }
}

fn bits_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".bits");
    PathBuf::from(s)
}

/// JSON header of the volume format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub origin_m: [f64; 3],
    pub pitch_m: f64,
    /// `[nx, ny, nz]`.
    pub dims: [usize; 3],
    /// Packed occupancy, one bit per voxel, x fastest, least significant bit
    /// first; relative paths resolve against the header's directory.
    pub data: PathBuf,
}

/// Splats every on-pixel into its nearest voxel (OR-compounding).
pub fn compound(slices: &SliceSet, voxel_pitch: f64) -> Result<VoxelVolume, ReconError> {
    slices.validate()?;
    if !(voxel_pitch > 0.0) {
        return Err(ReconError::InvalidSlices("voxel pitch must be positive".into()));
    }
    let placement = slices.placement;
    let cells = slices
        .slices
        .par_iter()
        .fold(HashSet::new, |mut acc, (mask, pose)| {
            let w = mask.width();
            for v in 0..mask.height() {
                for u in 0..w {
                    if mask.get(u, v)[0] > 127 {
                        let p = pose.transform_point(&placement.pixel_to_probe(u as f64, v as f64, w));
                        acc.insert([0, 1, 2].map(|a| (p[a] / voxel_pitch).round() as i64));
                    }
                }
            }
            acc
        })
        .reduce(HashSet::new, |mut a, b| {
            a.extend(b);
            a
        });
    VoxelVolume::from_cells(&cells, voxel_pitch)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeMetrics {
    pub hausdorff_mm: f64,
    pub chamfer_mm: f64,
    pub dice: f64,
    pub jaccard: f64,
}

/// Directed nearest-neighbor distances, in lattice units, from every cell of
/// `from` to the cells of `to`. Integer coordinates keep the squared
/// distances exact.
fn nearest_distances(from: &[[f64; 3]], to: &[[f64; 3]]) -> Vec<f64> {
    let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(to);
    from.par_iter()
        .map(|q| tree.nearest_one::<SquaredEuclidean>(q).distance.sqrt())
        .collect()
}

fn sorted_cells(cells: &HashSet<[i64; 3]>) -> Vec<[f64; 3]> {
    let mut v: Vec<[i64; 3]> = cells.iter().copied().collect();
    v.sort_unstable();
    v.iter().map(|c| c.map(|x| x as f64)).collect()
}

/// Hausdorff and Chamfer distances over occupied-voxel centers, Dice and
/// Jaccard over the shared lattice. Chamfer is the sum of the two directed
/// mean nearest-neighbor distances.
pub fn volume_metrics(a: &VoxelVolume, b: &VoxelVolume) -> Result<VolumeMetrics, ReconError> {
    if (a.pitch - b.pitch).abs() > 1e-12 * a.pitch.max(b.pitch) {
        return Err(ReconError::PitchMismatch(a.pitch, b.pitch));
    }
    let (ca, cb) = (a.cells(), b.cells());
    if ca.is_empty() || cb.is_empty() {
        return Err(ReconError::EmptyVolume);
    }
    let (pa, pb) = (sorted_cells(&ca), sorted_cells(&cb));
    let dab = nearest_distances(&pa, &pb);
    let dba = nearest_distances(&pb, &pa);
    let max = |d: &[f64]| d.iter().cloned().fold(0.0, f64::max);
    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    let inter = ca.intersection(&cb).count() as f64;
    let (na, nb) = (ca.len() as f64, cb.len() as f64);
    let mm = a.pitch * 1e3;
    Ok(VolumeMetrics {
        hausdorff_mm: max(&dab).max(max(&dba)) * mm,
        chamfer_mm: (mean(&dab) + mean(&dba)) * mm,
        dice: 2.0 * inter / (na + nb),
        jaccard: inter / (na + nb - inter),
    })
}
