//! Voxel grids over a bounding volume and visual-hull classification.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{in_sensor, CameraParams};
use crate::image::BinaryMask;
use crate::MM3_PER_CM3;

pub const OUTSIDE: u8 = 0;
pub const SURFACE: u8 = 1;
pub const INSIDE: u8 = 2;

const GRID_MAGIC: &[u8; 8] = b"SILHVOX\0";
const GRID_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HullError {
    #[error("invalid bounding volume: {0}")]
    BoundingVolume(String),
    #[error("invalid grid dimensions {0:?}")]
    Dims([usize; 3]),
    #[error("voxel index ({0}, {1}, {2}) out of range")]
    IndexOutOfRange(usize, usize, usize),
    #[error("invalid silhouette set: {0}")]
    SilhouetteSet(String),
    #[error("label invariant violated: {0}")]
    Labels(String),
    #[error("malformed voxel grid file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Axis-aligned box in world millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingVolume {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoundingVolume {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self, HullError> {
        let bv = BoundingVolume { min, max };
        bv.validate()?;
        Ok(bv)
    }

    /// Cube of side `side` centered on `center`.
    pub fn cube(center: [f64; 3], side: f64) -> Result<Self, HullError> {
        let h = side / 2.0;
        Self::new(
            [center[0] - h, center[1] - h, center[2] - h],
            [center[0] + h, center[1] + h, center[2] + h],
        )
    }

    pub fn validate(&self) -> Result<(), HullError> {
        for a in 0..3 {
            if !(self.min[a].is_finite() && self.max[a].is_finite() && self.min[a] < self.max[a]) {
                return Err(HullError::BoundingVolume(format!(
                    "axis {a}: min {} must be < max {}",
                    self.min[a], self.max[a]
                )));
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> [f64; 3] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }

    pub fn volume_mm3(&self) -> f64 {
        let e = self.extent();
        e[0] * e[1] * e[2]
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }
}

/// N1×N2×N3 label grid. Labels are stored row-major with the last index
/// fastest: `idx = (i·N2 + j)·N3 + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    bv: BoundingVolume,
    dims: [usize; 3],
    labels: Vec<u8>,
}

impl VoxelGrid {
    /// All voxels start out inside.
    pub fn new(bv: BoundingVolume, dims: [usize; 3]) -> Result<Self, HullError> {
        bv.validate()?;
        if dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
            return Err(HullError::Dims(dims));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or(HullError::Dims(dims))?;
        Ok(VoxelGrid { bv, dims, labels: vec![INSIDE; n] })
    }

    /// Grid from raw labels, validated against the label invariants.
    pub fn from_labels(bv: BoundingVolume, dims: [usize; 3], labels: Vec<u8>) -> Result<Self, HullError> {
        let mut g = Self::new(bv, dims)?;
        if labels.len() != g.labels.len() {
            return Err(HullError::Labels(format!("expected {} labels, got {}", g.labels.len(), labels.len())));
        }
        g.labels = labels;
        g.validate()?;
        Ok(g)
    }

    /// Grid whose solid set is given by `solid`, labeled surface/inside.
    pub fn from_solid(bv: BoundingVolume, dims: [usize; 3], solid: &[bool]) -> Result<Self, HullError> {
        let mut g = Self::new(bv, dims)?;
        if solid.len() != g.labels.len() {
            return Err(HullError::Labels("solid mask size mismatch".into()));
        }
        for (l, &s) in g.labels.iter_mut().zip(solid) {
            *l = if s { INSIDE } else { OUTSIDE };
        }
        g.relabel();
        Ok(g)
    }

    pub fn bv(&self) -> &BoundingVolume {
        &self.bv
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Voxel edge lengths in mm.
    pub fn h(&self) -> [f64; 3] {
        let e = self.bv.extent();
        [e[0] / self.dims[0] as f64, e[1] / self.dims[1] as f64, e[2] / self.dims[2] as f64]
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        let h = self.h();
        h[0] * h[1] * h[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.dims[2];
        let ij = idx / self.dims[2];
        (ij / self.dims[1], ij % self.dims[1], k)
    }

    #[inline]
    pub fn label(&self, i: usize, j: usize, k: usize) -> u8 {
        self.labels[self.index(i, j, k)]
    }

    #[inline]
    pub fn is_solid_idx(&self, idx: usize) -> bool {
        self.labels[idx] != OUTSIDE
    }

    pub fn solid_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != OUTSIDE).count()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Center of voxel `(i, j, k)`: `min + (i+½, j+½, k+½)·h`.
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Result<Vector3<f64>, HullError> {
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return Err(HullError::IndexOutOfRange(i, j, k));
        }
        Ok(self.center_unchecked(i, j, k))
    }

    #[inline]
    pub(crate) fn center_unchecked(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        let h = self.h();
        Vector3::new(
            self.bv.min[0] + (i as f64 + 0.5) * h[0],
            self.bv.min[1] + (j as f64 + 0.5) * h[1],
            self.bv.min[2] + (k as f64 + 0.5) * h[2],
        )
    }

    /// Voxel containing world point `p`, if `p` lies in the bounding volume.
    pub fn locate(&self, p: &Vector3<f64>) -> Option<usize> {
        let h = self.h();
        let mut ijk = [0usize; 3];
        for a in 0..3 {
            let f = (p[a] - self.bv.min[a]) / h[a];
            if !(f >= 0.0) || f > self.dims[a] as f64 {
                return None;
            }
            ijk[a] = (f as usize).min(self.dims[a] - 1);
        }
        Some(self.index(ijk[0], ijk[1], ijk[2]))
    }

    /// Indices of the six face neighbors; `None` for faces on the grid boundary.
    #[inline]
    pub fn neighbors6(&self, idx: usize) -> [Option<usize>; 6] {
        let (i, j, k) = self.coords(idx);
        let [n1, n2, n3] = self.dims;
        let s1 = n2 * n3;
        let s2 = n3;
        [
            (i > 0).then(|| idx - s1),
            (i + 1 < n1).then(|| idx + s1),
            (j > 0).then(|| idx - s2),
            (j + 1 < n2).then(|| idx + s2),
            (k > 0).then(|| idx - 1),
            (k + 1 < n3).then(|| idx + 1),
        ]
    }

    fn exposed(&self, idx: usize) -> bool {
        self.neighbors6(idx).iter().any(|n| match n {
            None => true,
            Some(n) => self.labels[*n] == OUTSIDE,
        })
    }

    /// Splits solid voxels into surface (exposed to outside or the grid
    /// boundary through a face) and inside.
    pub fn relabel(&mut self) {
        let fresh: Vec<u8> = (0..self.labels.len())
            .into_par_iter()
            .map(|idx| match self.labels[idx] {
                OUTSIDE => OUTSIDE,
                _ if self.exposed(idx) => SURFACE,
                _ => INSIDE,
            })
            .collect();
        self.labels = fresh;
    }

    /// Sets the listed voxels to outside and relabels.
    pub fn remove(&mut self, indices: &[usize]) {
        for &i in indices {
            self.labels[i] = OUTSIDE;
        }
        self.relabel();
    }

    pub fn validate(&self) -> Result<(), HullError> {
        for (idx, &l) in self.labels.iter().enumerate() {
            match l {
                OUTSIDE => {}
                SURFACE if !self.exposed(idx) => {
                    return Err(HullError::Labels(format!("surface voxel {idx} has no exposed face")))
                }
                INSIDE if self.exposed(idx) => {
                    return Err(HullError::Labels(format!("inside voxel {idx} has an exposed face")))
                }
                SURFACE | INSIDE => {}
                other => return Err(HullError::Labels(format!("voxel {idx} has label {other}"))),
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 48 + 12 + self.labels.len());
        out.extend_from_slice(GRID_MAGIC);
        out.extend_from_slice(&GRID_VERSION.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in self.bv.min.iter().chain(&self.bv.max) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HullError> {
        if bytes.len() < 76 || &bytes[..8] != GRID_MAGIC {
            return Err(HullError::Format("missing SILHVOX header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != GRID_VERSION {
            return Err(HullError::Format(format!("unsupported version {version}")));
        }
        let min = [f64_at(16), f64_at(24), f64_at(32)];
        let max = [f64_at(40), f64_at(48), f64_at(56)];
        let dims = [u32_at(64) as usize, u32_at(68) as usize, u32_at(72) as usize];
        let bv = BoundingVolume::new(min, max)?;
        let n = dims.iter().product::<usize>();
        if bytes.len() - 76 != n {
            return Err(HullError::Format(format!("expected {n} label bytes, found {}", bytes.len() - 76)));
        }
        Self::from_labels(bv, dims, bytes[76..].to_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HullError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HullError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn build_grid(bv: BoundingVolume, dims: [usize; 3]) -> Result<VoxelGrid, HullError> {
    VoxelGrid::new(bv, dims)
}

/// One binary silhouette per calibrated view.
#[derive(Debug, Clone)]
pub struct SilhouetteSet {
    views: Vec<(BinaryMask, CameraParams)>,
}

impl SilhouetteSet {
    pub fn new(views: Vec<(BinaryMask, CameraParams)>) -> Result<Self, HullError> {
        if views.len() < 2 {
            return Err(HullError::SilhouetteSet(format!("need at least 2 views, got {}", views.len())));
        }
        for (mask, cam) in &views {
            let k = &cam.intrinsics;
            if mask.width() != k.width || mask.height() != k.height {
                return Err(HullError::SilhouetteSet(format!(
                    "view '{}': mask is {}x{}, camera sensor is {}x{}",
                    cam.id,
                    mask.width(),
                    mask.height(),
                    k.width,
                    k.height
                )));
            }
        }
        Ok(SilhouetteSet { views })
    }

    pub fn views(&self) -> &[(BinaryMask, CameraParams)] {
        &self.views
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// A world point survives unless some view sees it on background.
    /// Views where the point projects off-sensor or behind the camera abstain.
    pub fn point_in_hull(&self, p: &Vector3<f64>) -> bool {
        self.views.iter().all(|(mask, cam)| match cam.project(p) {
            Ok((u, v)) if in_sensor(u, v, &cam.intrinsics) => mask.get(u.floor() as u32, v.floor() as u32),
            _ => true,
        })
    }
}

/// Visual-hull classification of every voxel center, then surface/inside
/// labeling of the survivors. Voxels already outside stay outside.
pub fn classify_voxels(g: &VoxelGrid, s: &SilhouetteSet) -> VoxelGrid {
    let labels: Vec<u8> = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            if g.labels[idx] == OUTSIDE {
                return OUTSIDE;
            }
            let (i, j, k) = g.coords(idx);
            if s.point_in_hull(&g.center_unchecked(i, j, k)) {
                INSIDE
            } else {
                OUTSIDE
            }
        })
        .collect();
    let mut out = VoxelGrid { bv: g.bv, dims: g.dims, labels };
    out.relabel();
    out
}

/// Solid volume (surface + inside voxels) in cm³.
pub fn hull_volume(g: &VoxelGrid) -> f64 {
    g.solid_count() as f64 * g.voxel_volume_mm3() / MM3_PER_CM3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraRig, Extrinsics, Intrinsics};

    fn cube100() -> BoundingVolume {
        BoundingVolume::new([0.0; 3], [100.0; 3]).unwrap()
    }

    #[test]
    fn build_grid_examples() {
        let g = build_grid(cube100(), [10, 10, 10]).unwrap();
        assert_eq!(g.h(), [10.0, 10.0, 10.0]);
        assert_eq!(g.count_label(INSIDE), 1000);
        let one = build_grid(cube100(), [1, 1, 1]).unwrap();
        assert_eq!(one.voxel_center(0, 0, 0).unwrap(), Vector3::new(50.0, 50.0, 50.0));
        assert!(BoundingVolume::new([0.0, 0.0, 5.0], [1.0, 1.0, 5.0]).is_err());
        assert!(build_grid(cube100(), [0, 3, 3]).is_err());
    }

    #[test]
    fn voxel_center_examples() {
        let g = build_grid(cube100(), [10, 10, 10]).unwrap();
        assert_eq!(g.voxel_center(0, 0, 0).unwrap(), Vector3::new(5.0, 5.0, 5.0));
        assert_eq!(g.voxel_center(9, 9, 9).unwrap(), Vector3::new(95.0, 95.0, 95.0));
        assert!(matches!(g.voxel_center(10, 0, 0), Err(HullError::IndexOutOfRange(10, 0, 0))));
        let odd = build_grid(BoundingVolume::new([-3.0, 1.0, 2.0], [7.0, 4.0, 9.0]).unwrap(), [5, 7, 9]).unwrap();
        let c = odd.voxel_center(2, 3, 4).unwrap();
        assert!((c - odd.bv().center()).norm() < 1e-12);
    }

    #[test]
    fn index_coords_roundtrip() {
        let g = build_grid(cube100(), [3, 4, 5]).unwrap();
        for idx in 0..g.len() {
            let (i, j, k) = g.coords(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
    }

    fn two_views(fg: [bool; 2]) -> SilhouetteSet {
        let rig = CameraRig::desk_rig(Vector3::new(50.0, 50.0, 50.0), 600.0, Intrinsics::default());
        let views = rig.cameras()[..2]
            .iter()
            .zip(fg)
            .map(|(c, f)| (BinaryMask::filled(640, 480, f), c.clone()))
            .collect();
        SilhouetteSet::new(views).unwrap()
    }

    #[test]
    fn all_foreground_keeps_everything() {
        let g = build_grid(cube100(), [6, 6, 6]).unwrap();
        let out = classify_voxels(&g, &two_views([true, true]));
        assert_eq!(out.solid_count(), 216);
        assert_eq!(out.count_label(INSIDE), 64);
        assert_eq!(out.count_label(SURFACE), 216 - 64);
        out.validate().unwrap();
        assert!((hull_volume(&out) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn one_background_view_empties_grid() {
        let g = build_grid(cube100(), [6, 6, 6]).unwrap();
        let out = classify_voxels(&g, &two_views([true, false]));
        assert_eq!(out.solid_count(), 0);
        assert_eq!(hull_volume(&out), 0.0);
    }

    #[test]
    fn off_sensor_and_behind_views_abstain() {
        // the second camera looks away from the grid entirely
        let k = Intrinsics::default();
        let toward = Extrinsics::look_at(Vector3::new(50.0, 50.0, 700.0), Vector3::new(50.0, 50.0, 50.0), Vector3::y());
        let away = Extrinsics::look_at(Vector3::new(50.0, 50.0, 700.0), Vector3::new(50.0, 50.0, 900.0), Vector3::y());
        let s = SilhouetteSet::new(vec![
            (BinaryMask::filled(640, 480, true), CameraParams::new("a", k, toward)),
            (BinaryMask::filled(640, 480, false), CameraParams::new("b", k, away)),
        ])
        .unwrap();
        let g = build_grid(cube100(), [4, 4, 4]).unwrap();
        assert_eq!(classify_voxels(&g, &s).solid_count(), 64);
    }

    #[test]
    fn silhouette_set_checks_sizes() {
        let rig = CameraRig::desk_rig(Vector3::zeros(), 600.0, Intrinsics::default());
        let c = rig.cameras()[0].clone();
        assert!(SilhouetteSet::new(vec![(BinaryMask::filled(640, 480, true), c.clone())]).is_err());
        assert!(SilhouetteSet::new(vec![
            (BinaryMask::filled(640, 480, true), c.clone()),
            (BinaryMask::filled(320, 480, true), c)
        ])
        .is_err());
    }

    #[test]
    fn relabel_marks_boundary_and_exposed() {
        let bv = cube100();
        let mut solid = vec![true; 5 * 5 * 5];
        let g0 = VoxelGrid::from_solid(bv, [5, 5, 5], &solid).unwrap();
        assert_eq!(g0.label(2, 2, 2), INSIDE);
        let center = g0.index(2, 2, 2);
        solid[g0.index(2, 2, 1)] = false;
        let g = VoxelGrid::from_solid(bv, [5, 5, 5], &solid).unwrap();
        assert_eq!(g.labels()[center], SURFACE);
        g.validate().unwrap();
        let mut broken = g.labels().to_vec();
        broken[center] = INSIDE;
        assert!(VoxelGrid::from_labels(bv, [5, 5, 5], broken).is_err());
        let mut bad = g.labels().to_vec();
        bad[0] = 7;
        assert!(VoxelGrid::from_labels(bv, [5, 5, 5], bad).is_err());
    }

    #[test]
    fn grid_file_roundtrip() {
        let bv = BoundingVolume::new([-1.5, 2.0, 0.125], [3.0, 9.0, 4.0]).unwrap();
        let solid: Vec<bool> = (0..4 * 3 * 5).map(|i| i % 3 != 0).collect();
        let g = VoxelGrid::from_solid(bv, [4, 3, 5], &solid).unwrap();
        let bytes = g.to_bytes();
        assert_eq!(bytes.len(), 16 + 48 + 12 + 60);
        assert_eq!(&bytes[..8], b"SILHVOX\0");
        assert_eq!(VoxelGrid::from_bytes(&bytes).unwrap(), g);
        assert!(VoxelGrid::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn locate_inverts_voxel_center() {
        let g = build_grid(BoundingVolume::new([-10.0, 0.0, 5.0], [10.0, 3.0, 6.0]).unwrap(), [7, 3, 4]).unwrap();
        for idx in 0..g.len() {
            let (i, j, k) = g.coords(idx);
            assert_eq!(g.locate(&g.voxel_center(i, j, k).unwrap()), Some(idx));
        }
        assert_eq!(g.locate(&Vector3::new(-10.5, 1.0, 5.5)), None);
    }
}
