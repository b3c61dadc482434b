//! Photo-consistency space carving of a classified voxel hull.
//!
//! Each iteration visits every surface voxel, gathers the colors it projects
//! to in the views that can see it, and marks it for removal when those colors
//! disagree. Removals are applied after the sweep, so one iteration does not
//! depend on the visiting order.

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{in_sensor, CameraParams};
use crate::hull::{VoxelGrid, SURFACE};
use crate::image::{Rgb, RgbImage};

#[derive(Debug, Error)]
pub enum CarveError {
    #[error("invalid color image set: {0}")]
    ImageSet(String),
    #[error("invalid consistency parameters: {0}")]
    Params(String),
}

/// Color views aligned with a silhouette set.
#[derive(Debug, Clone)]
pub struct ColorImageSet {
    views: Vec<(RgbImage, CameraParams)>,
}

impl ColorImageSet {
    pub fn new(views: Vec<(RgbImage, CameraParams)>) -> Result<Self, CarveError> {
        for (img, cam) in &views {
            let k = &cam.intrinsics;
            if img.width() != k.width || img.height() != k.height {
                return Err(CarveError::ImageSet(format!(
                    "view '{}': image is {}x{}, sensor is {}x{}",
                    cam.id,
                    img.width(),
                    img.height(),
                    k.width,
                    k.height
                )));
            }
        }
        Ok(ColorImageSet { views })
    }

    pub fn views(&self) -> &[(RgbImage, CameraParams)] {
        &self.views
    }

    /// Checks view count and camera ids against another ordered id list.
    pub fn check_aligned<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<(), CarveError> {
        let ours: Vec<&str> = self.views.iter().map(|(_, c)| c.id.as_str()).collect();
        let theirs: Vec<&str> = ids.into_iter().collect();
        if ours != theirs {
            return Err(CarveError::ImageSet(format!("camera ids {ours:?} do not match {theirs:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyParams {
    /// Maximum per-channel population standard deviation, intensity units.
    pub tau: f64,
    pub min_views: usize,
    pub max_iters: usize,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        ConsistencyParams { tau: 25.0, min_views: 2, max_iters: 64 }
    }
}

impl ConsistencyParams {
    pub fn validate(&self) -> Result<(), CarveError> {
        if !(self.tau >= 0.0) {
            return Err(CarveError::Params(format!("tau must be ≥ 0, got {}", self.tau)));
        }
        if self.min_views < 2 {
            return Err(CarveError::Params(format!("min_views must be ≥ 2, got {}", self.min_views)));
        }
        if self.max_iters < 1 {
            return Err(CarveError::Params("max_iters must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarveResult {
    pub grid: VoxelGrid,
    pub iterations: usize,
    pub removed: usize,
    pub converged: bool,
}

/// True iff some ray sample strictly between the voxel center and the camera
/// falls in another solid voxel. Samples are spaced half the smallest voxel
/// edge apart and stop once they leave the bounding volume.
pub fn is_occluded(g: &VoxelGrid, idx: usize, cam_center: &Vector3<f64>) -> bool {
    let (i, j, k) = g.coords(idx);
    let start = g.center_unchecked(i, j, k);
    let to_cam = cam_center - start;
    let dist = to_cam.norm();
    if dist == 0.0 {
        return false;
    }
    let dir = to_cam / dist;
    let h = g.h();
    let step = 0.5 * h[0].min(h[1]).min(h[2]);
    let mut n = 1usize;
    loop {
        let t = n as f64 * step;
        if t >= dist {
            return false;
        }
        let p = start + t * dir;
        match g.locate(&p) {
            None => return false,
            Some(other) if other != idx && g.is_solid_idx(other) => return true,
            Some(_) => {}
        }
        n += 1;
    }
}

/// Colors of an unoccluded, on-sensor voxel center in every view, in view order.
pub fn voxel_samples(g: &VoxelGrid, idx: usize, imgs: &ColorImageSet) -> Vec<Rgb> {
    let centers: Vec<Vector3<f64>> = imgs.views.iter().map(|(_, c)| c.center()).collect();
    samples_with_centers(g, idx, imgs, &centers)
}

fn samples_with_centers(g: &VoxelGrid, idx: usize, imgs: &ColorImageSet, centers: &[Vector3<f64>]) -> Vec<Rgb> {
    let (i, j, k) = g.coords(idx);
    let p = g.center_unchecked(i, j, k);
    let mut out = Vec::with_capacity(imgs.views.len());
    for ((img, cam), c) in imgs.views.iter().zip(centers) {
        let Ok((u, v)) = cam.project(&p) else { continue };
        if !in_sensor(u, v, &cam.intrinsics) || is_occluded(g, idx, c) {
            continue;
        }
        out.push(img.get(u.floor() as u32, v.floor() as u32));
    }
    out
}

/// Fewer than `min_views` samples never fail; otherwise every channel's
/// population standard deviation must be ≤ tau.
pub fn is_consistent(samples: &[Rgb], p: &ConsistencyParams) -> bool {
    if samples.len() < p.min_views {
        return true;
    }
    let n = samples.len() as f64;
    (0..3).all(|c| {
        let mean = samples.iter().map(|s| s[c] as f64).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[c] as f64 - mean).powi(2)).sum::<f64>() / n;
        var.sqrt() <= p.tau
    })
}

/// One sweep over the given voxel indices against the current grid.
/// Returns the inconsistent surface voxels in ascending index order.
pub fn sweep(g: &VoxelGrid, imgs: &ColorImageSet, p: &ConsistencyParams, order: &[usize]) -> Vec<usize> {
    let centers: Vec<Vector3<f64>> = imgs.views.iter().map(|(_, c)| c.center()).collect();
    let mut failing: Vec<usize> = order
        .par_iter()
        .copied()
        .filter(|&idx| g.labels()[idx] == SURFACE)
        .filter(|&idx| !is_consistent(&samples_with_centers(g, idx, imgs, &centers), p))
        .collect();
    failing.sort_unstable();
    failing
}

/// Iterated carving until a sweep removes nothing or `max_iters` sweeps ran.
pub fn carve(g: &VoxelGrid, imgs: &ColorImageSet, p: &ConsistencyParams) -> Result<CarveResult, CarveError> {
    p.validate()?;
    let mut grid = g.clone();
    let mut removed = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < p.max_iters {
        iterations += 1;
        let surface: Vec<usize> = (0..grid.len()).filter(|&i| grid.labels()[i] == SURFACE).collect();
        let failing = sweep(&grid, imgs, p, &surface);
        if failing.is_empty() {
            converged = true;
            break;
        }
        removed += failing.len();
        grid.remove(&failing);
    }
    Ok(CarveResult { grid, iterations, removed, converged })
}
