//! Pinhole cameras, camera rigs and the JSON rig file format.
//!
//! World units are millimeters. A camera maps a world point `p` to camera
//! coordinates `x = R·p + t` and then to pixels with the usual pinhole
//! intrinsics; there is no distortion model.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("point lies at or behind the camera's optical plane")]
    BehindCamera,
    #[error("failed to parse rig: {0}")]
    Parse(String),
    #[error("invalid rig: {0}")]
    InvalidRig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(format!("focal lengths must be positive (fx={}, fy={})", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            return Err("sensor size must be non-zero".into());
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(format!("cx={} outside [0, {})", self.cx, self.width));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(format!("cy={} outside [0, {})", self.cy, self.height));
        }
        Ok(())
    }

    /// Same camera sampled `factor` times more densely along each image axis.
    pub fn upscaled(&self, factor: u32) -> Intrinsics {
        let f = factor as f64;
        Intrinsics {
            fx: self.fx * f,
            fy: self.fy * f,
            cx: self.cx * f,
            cy: self.cy * f,
            width: self.width * factor,
            height: self.height * factor,
        }
    }
}

impl Default for Intrinsics {
    fn default() -> Self {
        Intrinsics { fx: 800.0, fy: 800.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }
}

/// World→camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn identity() -> Self {
        Extrinsics { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let r = &self.rotation;
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !err.is_finite() || err > ORTHONORMAL_TOL {
            return Err(format!("rotation is not orthonormal (max |RᵀR - I| = {err:e})"));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(format!("rotation determinant is {det}, expected +1"));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err("translation must be finite".into());
        }
        Ok(())
    }

    /// Camera looking from `eye` at `target`. Camera axes: x right, y down,
    /// z forward; `up` only needs to be non-parallel to the viewing direction.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Extrinsics { rotation, translation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraParams {
    pub id: String,
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
}

impl CameraParams {
    pub fn new(id: impl Into<String>, intrinsics: Intrinsics, extrinsics: Extrinsics) -> Self {
        CameraParams { id: id.into(), intrinsics, extrinsics }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.intrinsics.validate()?;
        self.extrinsics.validate()
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.extrinsics.rotation * p + self.extrinsics.translation
    }

    /// Pixel coordinates of a world point. The result may lie off-sensor.
    pub fn project(&self, p: &Vector3<f64>) -> Result<(f64, f64), CameraError> {
        project_camera_point(&self.to_camera(p), &self.intrinsics)
    }

    /// Optical center in world coordinates, `-Rᵀ·t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.extrinsics.rotation.transpose() * self.extrinsics.translation)
    }

    /// Unit world-space direction of the ray through pixel coordinates `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        let d_cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        (self.extrinsics.rotation.transpose() * d_cam).normalize()
    }

    /// Same pose, sensor sampled `factor` times more densely.
    pub fn upscaled(&self, factor: u32) -> CameraParams {
        CameraParams { intrinsics: self.intrinsics.upscaled(factor), ..self.clone() }
    }
}

/// Pinhole projection of a point already in camera coordinates.
pub fn project_camera_point(x: &Vector3<f64>, k: &Intrinsics) -> Result<(f64, f64), CameraError> {
    if x.z <= 0.0 {
        return Err(CameraError::BehindCamera);
    }
    Ok((k.fx * x.x / x.z + k.cx, k.fy * x.y / x.z + k.cy))
}

/// Free-function form of [`CameraParams::project`].
pub fn project_point(p: &Vector3<f64>, cam: &CameraParams) -> Result<(f64, f64), CameraError> {
    cam.project(p)
}

/// Half-open sensor test: `0 ≤ u < width` and `0 ≤ v < height`.
pub fn in_sensor(u: f64, v: f64, k: &Intrinsics) -> bool {
    u >= 0.0 && u < k.width as f64 && v >= 0.0 && v < k.height as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    cameras: Vec<CameraParams>,
}

impl CameraRig {
    pub fn new(cameras: Vec<CameraParams>) -> Result<Self, CameraError> {
        if cameras.len() < 2 {
            return Err(CameraError::InvalidRig(format!(
                "a rig needs at least 2 cameras, got {}",
                cameras.len()
            )));
        }
        let mut seen = HashSet::new();
        for cam in &cameras {
            if !seen.insert(cam.id.as_str()) {
                return Err(CameraError::InvalidRig(format!("duplicate camera id '{}'", cam.id)));
            }
            cam.validate()
                .map_err(|e| CameraError::InvalidRig(format!("camera '{}': {e}", cam.id)))?;
        }
        Ok(CameraRig { cameras })
    }

    pub fn cameras(&self) -> &[CameraParams] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CameraParams> {
        self.cameras.iter().find(|c| c.id == id)
    }

    /// Replica of the four-camera desk rig: three lateral cameras 120° apart
    /// on a horizontal circle through `center`, plus one camera straight above.
    /// All cameras sit `distance` mm from `center` and look at it.
    pub fn desk_rig(center: Vector3<f64>, distance: f64, intrinsics: Intrinsics) -> CameraRig {
        let up = Vector3::z();
        let mut cameras: Vec<CameraParams> = (0..3)
            .map(|k| {
                let az = (k as f64 * 120.0).to_radians();
                let eye = center + distance * Vector3::new(az.cos(), az.sin(), 0.0);
                CameraParams::new(format!("lateral{k}"), intrinsics, Extrinsics::look_at(eye, center, up))
            })
            .collect();
        let eye = center + distance * Vector3::z();
        cameras.push(CameraParams::new("top", intrinsics, Extrinsics::look_at(eye, center, Vector3::y())));
        CameraRig::new(cameras).expect("desk rig is valid by construction")
    }

    pub fn to_json(&self) -> String {
        let file = RigFile { cameras: self.cameras.iter().map(CameraEntry::from).collect() };
        serde_json::to_string_pretty(&file).expect("rig serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, CameraError> {
        let file: RigFile = serde_json::from_str(text).map_err(|e| CameraError::Parse(e.to_string()))?;
        Self::from_file_repr(file)
    }

    fn from_file_repr(file: RigFile) -> Result<Self, CameraError> {
        CameraRig::new(file.cameras.into_iter().map(CameraParams::from).collect())
    }
}

pub fn load_rig(path: impl AsRef<Path>) -> Result<CameraRig, CameraError> {
    CameraRig::from_json(&fs::read_to_string(path)?)
}

pub fn save_rig(rig: &CameraRig, path: impl AsRef<Path>) -> Result<(), CameraError> {
    fs::write(path, rig.to_json())?;
    Ok(())
}

// On-disk representation.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RigFile {
    pub cameras: Vec<CameraEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct CameraEntry {
    id: String,
    intrinsics: Intrinsics,
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl From<&CameraParams> for CameraEntry {
    fn from(c: &CameraParams) -> Self {
        let r = &c.extrinsics.rotation;
        let mut rotation = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                rotation[row * 3 + col] = r[(row, col)];
            }
        }
        let t = &c.extrinsics.translation;
        CameraEntry { id: c.id.clone(), intrinsics: c.intrinsics, rotation, translation: [t.x, t.y, t.z] }
    }
}

impl From<CameraEntry> for CameraParams {
    fn from(e: CameraEntry) -> Self {
        CameraParams {
            id: e.id,
            intrinsics: e.intrinsics,
            extrinsics: Extrinsics {
                rotation: Matrix3::from_row_slice(&e.rotation),
                translation: Vector3::from_column_slice(&e.translation),
            },
        }
    }
}

/// Serde adapter so scene files can embed a rig inline.
impl Serialize for CameraRig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RigFile { cameras: self.cameras.iter().map(CameraEntry::from).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraRig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = RigFile::deserialize(d)?;
        CameraRig::from_file_repr(file).map_err(serde::de::Error::custom)
    }
}
