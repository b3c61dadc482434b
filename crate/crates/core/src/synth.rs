//! Synthetic scenes: analytic primitives seen by a camera rig.
//!
//! Scenes provide exact silhouettes (per-pixel ray casting), flat-shaded color
//! renders with optional texture jitter and background shadows, analytic
//! volumes, and a Monte Carlo estimate of the visual hull volume.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{in_sensor, CameraError, CameraParams, CameraRig};
use crate::hull::{BoundingVolume, HullError};
use crate::image::{BinaryMask, Rgb, RgbImage};
use crate::MM3_PER_CM3;

/// z-score of the two-sided 99% normal interval.
const Z99: f64 = 2.5758293035489004;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("primitives {0} and {1} may overlap; analytic volume is not additive")]
    OverlappingPrimitives(usize, usize),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("failed to parse scene: {0}")]
    Parse(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Hull(#[from] HullError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    /// Capped cylinder along the local z axis, centered on the origin.
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    pub fn volume_mm3(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
            Shape::Box { half_extents: [a, b, c] } => 8.0 * a * b * c,
            Shape::Cylinder { radius, height } => std::f64::consts::PI * radius * radius * height,
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Box { half_extents: [a, b, c] } => (a * a + b * b + c * c).sqrt(),
            Shape::Cylinder { radius, height } => (radius * radius + 0.25 * height * height).sqrt(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Shape::Sphere { radius } => radius > 0.0,
            Shape::Box { half_extents } => half_extents.iter().all(|&v| v > 0.0),
            Shape::Cylinder { radius, height } => radius > 0.0 && height > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{self:?}: sizes must be positive"))
        }
    }

    /// Entry distance of a local-frame ray, if it hits at t > 0.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        match *self {
            Shape::Sphere { radius } => {
                let b = o.dot(d);
                let c = o.dot(o) - radius * radius;
                let a = d.dot(d);
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                nearest_positive((-b - s) / a, (-b + s) / a)
            }
            Shape::Box { half_extents } => {
                let (t0, t1) = slab(o, d, &half_extents, [true, true, true])?;
                nearest_positive(t0, t1)
            }
            Shape::Cylinder { radius, height } => {
                let hz = 0.5 * height;
                // side: x² + y² = r²
                let a = d.x * d.x + d.y * d.y;
                let b = o.x * d.x + o.y * d.y;
                let c = o.x * o.x + o.y * o.y - radius * radius;
                let (mut t0, mut t1) = if a == 0.0 {
                    if c > 0.0 {
                        return None;
                    }
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    let disc = b * b - a * c;
                    if disc < 0.0 {
                        return None;
                    }
                    let s = disc.sqrt();
                    ((-b - s) / a, (-b + s) / a)
                };
                // caps: |z| ≤ h/2
                let (z0, z1) = slab(o, d, &[0.0, 0.0, hz], [false, false, true])?;
                t0 = t0.max(z0);
                t1 = t1.min(z1);
                if t0 > t1 {
                    return None;
                }
                nearest_positive(t0, t1)
            }
        }
    }
}

fn nearest_positive(t0: f64, t1: f64) -> Option<f64> {
    if t0 > 0.0 {
        Some(t0)
    } else if t1 > 0.0 {
        Some(t1)
    } else {
        None
    }
}

/// Ray interval inside |x_a| ≤ half[a] for the enabled axes.
fn slab(o: &Vector3<f64>, d: &Vector3<f64>, half: &[f64; 3], axes: [bool; 3]) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if !axes[a] {
            continue;
        }
        if d[a] == 0.0 {
            if o[a].abs() > half[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[a];
        let (mut lo, mut hi) = ((-half[a] - o[a]) * inv, (half[a] - o[a]) * inv);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Surface coloring, evaluated at the hit point in the primitive's frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    #[default]
    Solid,
    /// `albedo` where `p·normal ≥ 0`, `other` elsewhere.
    TwoTone { normal: [f64; 3], other: Rgb },
    /// Three-phase color wheel around the local z axis: channel c gets
    /// `albedo[c] + amplitude·cos(cycles·φ − 2πc/3)` with φ the azimuth.
    HueWheel { amplitude: f64, cycles: f64 },
}

impl Pattern {
    fn color(&self, albedo: Rgb, p: &Vector3<f64>) -> [f64; 3] {
        let base = albedo.map(|c| c as f64);
        match *self {
            Pattern::Solid => base,
            Pattern::TwoTone { normal, other } => {
                if p.dot(&Vector3::from(normal)) >= 0.0 {
                    base
                } else {
                    other.map(|c| c as f64)
                }
            }
            Pattern::HueWheel { amplitude, cycles } => {
                let phi = p.y.atan2(p.x);
                let third = 2.0 * std::f64::consts::PI / 3.0;
                [0, 1, 2].map(|c| base[c] + amplitude * (cycles * phi - third * c as f64).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    /// Local→world rotation, row-major. Identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 9]>,
    /// Local origin in world mm.
    pub translation: [f64; 3],
    pub albedo: Rgb,
    /// Per-pixel uniform intensity jitter amplitude.
    #[serde(default)]
    pub texture_noise: u8,
    #[serde(default, skip_serializing_if = "is_solid")]
    pub pattern: Pattern,
}

fn is_solid(p: &Pattern) -> bool {
    *p == Pattern::Solid
}

impl Primitive {
    pub fn new(shape: Shape, translation: [f64; 3], albedo: Rgb) -> Self {
        Primitive { shape, rotation: None, translation, albedo, texture_noise: 0, pattern: Pattern::Solid }
    }

    pub fn sphere(radius: f64, center: [f64; 3], albedo: Rgb) -> Self {
        Self::new(Shape::Sphere { radius }, center, albedo)
    }

    fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.map(|r| Matrix3::from_row_slice(&r)).unwrap_or_else(Matrix3::identity)
    }

    fn validate(&self) -> Result<(), String> {
        self.shape.validate()?;
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err("primitive rotation is not a proper rotation".into());
        }
        Ok(())
    }

    /// World point → local frame.
    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix().transpose() * (p - Vector3::from(self.translation))
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let q = self.to_local(p);
        match self.shape {
            Shape::Sphere { radius } => q.norm_squared() <= radius * radius,
            Shape::Box { half_extents } => (0..3).all(|a| q[a].abs() <= half_extents[a]),
            Shape::Cylinder { radius, height } => q.x * q.x + q.y * q.y <= radius * radius && q.z.abs() <= 0.5 * height,
        }
    }

    /// World ray → (distance along the unit direction, local hit point).
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let rt = self.rotation_matrix().transpose();
        let o = rt * (origin - Vector3::from(self.translation));
        let d = rt * dir;
        self.shape.intersect(&o, &d).map(|t| (t, o + t * d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowPatch {
    pub view_id: String,
    /// Pixel-space polygon, vertices in order.
    pub polygon: Vec<[f64; 2]>,
    /// Multiplicative darkening in (0, 1).
    pub darkening: f64,
}

impl ShadowPatch {
    fn validate(&self) -> Result<(), String> {
        if !(self.darkening > 0.0 && self.darkening < 1.0) {
            return Err(format!("shadow darkening {} must lie in (0, 1)", self.darkening));
        }
        if self.polygon.len() < 3 {
            return Err("shadow polygon needs at least 3 vertices".into());
        }
        Ok(())
    }

    /// Even-odd point-in-polygon test.
    pub fn covers(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        let n = self.polygon.len();
        let mut j = n - 1;
        for i in 0..n {
            let [xi, yi] = self.polygon[i];
            let [xj, yj] = self.polygon[j];
            if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// Patch covering the projection of a world-space box, as the convex hull
    /// of its projected corners. `None` if a corner is behind the camera.
    pub fn from_box_projection(cam: &CameraParams, min: [f64; 3], max: [f64; 3], darkening: f64) -> Option<Self> {
        let mut pts = Vec::with_capacity(8);
        for c in 0..8 {
            let p = Vector3::new(
                if c & 1 == 0 { min[0] } else { max[0] },
                if c & 2 == 0 { min[1] } else { max[1] },
                if c & 4 == 0 { min[2] } else { max[2] },
            );
            let (u, v) = cam.project(&p).ok()?;
            pts.push(Vector2::new(u, v));
        }
        let hull = convex_hull(pts);
        Some(ShadowPatch { view_id: cam.id.clone(), polygon: hull.iter().map(|p| [p.x, p.y]).collect(), darkening })
    }
}

/// Andrew's monotone chain, counter-clockwise.
fn convex_hull(mut pts: Vec<Vector2<f64>>) -> Vec<Vector2<f64>> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a - o).perp(&(b - o));
    let mut lower: Vec<Vector2<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vector2<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub primitives: Vec<Primitive>,
    pub rig: CameraRig,
    pub background: Rgb,
    pub shadows: Vec<ShadowPatch>,
    pub bounding_volume: BoundingVolume,
    pub seed: u64,
    /// Primitives whose volume is the measurement target; all when `None`.
    pub measured: Option<Vec<usize>>,
}

/// Rig given inline or as a path relative to the scene file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RigSource {
    Path(String),
    Inline(CameraRig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub rig: RigSource,
    pub bounding_volume: BoundingVolume,
    pub background: Rgb,
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub shadows: Vec<ShadowPatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured: Option<Vec<usize>>,
    /// Informational; recomputed and checked on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_volume: Option<f64>,
}

impl Scene {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.primitives.is_empty() {
            return Err(SynthError::Invalid("scene has no primitives".into()));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            p.validate().map_err(|e| SynthError::Invalid(format!("primitive {i}: {e}")))?;
        }
        for s in &self.shadows {
            s.validate().map_err(SynthError::Invalid)?;
            if self.rig.get(&s.view_id).is_none() {
                return Err(SynthError::Invalid(format!("shadow refers to unknown view '{}'", s.view_id)));
            }
        }
        if let Some(m) = &self.measured {
            if m.is_empty() || m.iter().any(|&i| i >= self.primitives.len()) {
                return Err(SynthError::Invalid("measured primitive indices out of range".into()));
            }
        }
        self.bounding_volume.validate()?;
        Ok(())
    }

    pub fn from_file_repr(file: SceneFile, base_dir: Option<&Path>) -> Result<Self, SynthError> {
        let rig = match file.rig {
            RigSource::Inline(r) => r,
            RigSource::Path(p) => {
                let path = match base_dir {
                    Some(dir) => dir.join(&p),
                    None => PathBuf::from(&p),
                };
                crate::camera::load_rig(&path)?
            }
        };
        let scene = Scene {
            name: file.name,
            primitives: file.primitives,
            rig,
            background: file.background,
            shadows: file.shadows,
            bounding_volume: file.bounding_volume,
            seed: file.seed,
            measured: file.measured,
        };
        scene.validate()?;
        if let Some(declared) = file.ground_truth_volume {
            let actual = analytic_volume(&scene)?;
            if (declared - actual).abs() > 1e-6 * actual.max(1.0) {
                return Err(SynthError::Invalid(format!(
                    "declared ground truth {declared} cm³ differs from analytic {actual} cm³"
                )));
            }
        }
        Ok(scene)
    }

    pub fn to_file_repr(&self, rig: RigSource) -> Result<SceneFile, SynthError> {
        Ok(SceneFile {
            name: self.name.clone(),
            seed: self.seed,
            rig,
            bounding_volume: self.bounding_volume,
            background: self.background,
            primitives: self.primitives.clone(),
            shadows: self.shadows.clone(),
            measured: self.measured.clone(),
            ground_truth_volume: Some(analytic_volume(self)?),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let file: SceneFile = serde_json::from_str(&text).map_err(|e| SynthError::Parse(e.to_string()))?;
        Self::from_file_repr(file, path.parent())
    }

    /// Nearest primitive hit along a world ray.
    pub fn trace(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(usize, Vector3<f64>)> {
        self.primitives
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.intersect(origin, dir).map(|(t, local)| (t, i, local)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, i, local)| (i, local))
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.primitives.iter().any(|prim| prim.contains(p))
    }

    pub fn ground_truth_volume(&self) -> Result<f64, SynthError> {
        analytic_volume(self)
    }
}

/// Exact silhouette: a pixel is foreground iff the ray through its center
/// hits a primitive.
pub fn render_silhouette_exact(scene: &Scene, cam: &CameraParams) -> BinaryMask {
    let (w, h) = (cam.intrinsics.width, cam.intrinsics.height);
    let origin = cam.center();
    let mut mask = BinaryMask::filled(w, h, false);
    mask.data_mut().par_chunks_mut(w as usize).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let d = cam.ray_direction(x as f64 + 0.5, y as f64 + 0.5);
            *px = scene.primitives.iter().any(|p| p.intersect(&origin, &d).is_some());
        }
    });
    mask
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Flat-shaded render: hit pixels take the primitive's pattern color plus
/// a per-pixel uniform jitter in `[-noise, noise]`; background pixels take the
/// background color and are darkened by the view's shadow patches.
/// Jitter streams are seeded per row, so the render is reproducible.
pub fn render_color(scene: &Scene, cam: &CameraParams) -> RgbImage {
    let (w, h) = (cam.intrinsics.width, cam.intrinsics.height);
    let origin = cam.center();
    let shadows: Vec<&ShadowPatch> = scene.shadows.iter().filter(|s| s.view_id == cam.id).collect();
    let view_seed = splitmix64(scene.seed ^ fnv1a(&cam.id));
    let mut img = RgbImage::filled(w, h, scene.background);
    img.data_mut().par_chunks_mut(w as usize).enumerate().for_each(|(y, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(view_seed.wrapping_add(y as u64)));
        for (x, px) in row.iter_mut().enumerate() {
            let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
            let jitter_draw: f64 = rng.gen();
            let d = cam.ray_direction(u, v);
            match scene.trace(&origin, &d) {
                Some((i, local)) => {
                    let prim = &scene.primitives[i];
                    let a = prim.texture_noise as i32;
                    // uniform integer in [-a, a]
                    let jitter = ((jitter_draw * (2 * a + 1) as f64).floor() as i32 - a) as f64;
                    let base = prim.pattern.color(prim.albedo, &local);
                    *px = base.map(|c| (c.round() + jitter).clamp(0.0, 255.0) as u8);
                }
                None => {
                    if shadows.iter().any(|s| s.covers(u, v)) {
                        let k: f64 = shadows.iter().filter(|s| s.covers(u, v)).map(|s| s.darkening).product();
                        *px = scene.background.map(|c| (c as f64 * k).round() as u8);
                    }
                }
            }
        }
    });
    img
}

/// Pixels of the view darkened by shadows.
pub fn shadow_footprint(scene: &Scene, cam: &CameraParams) -> BinaryMask {
    let exact = render_silhouette_exact(scene, cam);
    let shadows: Vec<&ShadowPatch> = scene.shadows.iter().filter(|s| s.view_id == cam.id).collect();
    BinaryMask::from_fn(cam.intrinsics.width, cam.intrinsics.height, |x, y| {
        !exact.get(x, y) && shadows.iter().any(|s| s.covers(x as f64 + 0.5, y as f64 + 0.5))
    })
}

/// Sum of the measured primitives' analytic volumes in cm³. All primitive
/// pairs must have disjoint bounding spheres.
pub fn analytic_volume(scene: &Scene) -> Result<f64, SynthError> {
    let prims = &scene.primitives;
    for i in 0..prims.len() {
        for j in i + 1..prims.len() {
            let d = (Vector3::from(prims[i].translation) - Vector3::from(prims[j].translation)).norm();
            if d < prims[i].shape.bounding_radius() + prims[j].shape.bounding_radius() {
                return Err(SynthError::OverlappingPrimitives(i, j));
            }
        }
    }
    let vol: f64 = match &scene.measured {
        Some(ids) => ids.iter().map(|&i| prims[i].shape.volume_mm3()).sum(),
        None => prims.iter().map(|p| p.shape.volume_mm3()).sum(),
    };
    Ok(vol / MM3_PER_CM3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloVolume {
    pub volume_cm3: f64,
    /// Half-width of the 99% binomial confidence interval.
    pub half_width_cm3: f64,
    pub samples: usize,
}

/// Monte Carlo visual-hull volume over the scene's bounding volume. Points are
/// kept unless a view sees them on background in an exact silhouette rendered
/// at `upscale`× resolution; views that cannot see a point abstain.
pub fn brute_force_hull_volume(scene: &Scene, rig: &CameraRig, samples: usize, upscale: u32, seed: u64) -> MonteCarloVolume {
    let views: Vec<(CameraParams, BinaryMask)> = rig
        .cameras()
        .iter()
        .map(|c| {
            let hi = c.upscaled(upscale);
            let mask = render_silhouette_exact(scene, &hi);
            (hi, mask)
        })
        .collect();
    let bv = scene.bounding_volume;
    const CHUNK: usize = 4096;
    let chunks = samples.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(c as u64)));
            let n = CHUNK.min(samples - c * CHUNK);
            let mut hits = 0usize;
            for _ in 0..n {
                let p = Vector3::new(
                    rng.gen_range(bv.min[0]..bv.max[0]),
                    rng.gen_range(bv.min[1]..bv.max[1]),
                    rng.gen_range(bv.min[2]..bv.max[2]),
                );
                let inside = views.iter().all(|(cam, mask)| {
                    let x = cam.to_camera(&p);
                    if x.z <= 0.0 {
                        return true;
                    }
                    let k = &cam.intrinsics;
                    let u = k.fx * x.x / x.z + k.cx;
                    let v = k.fy * x.y / x.z + k.cy;
                    !in_sensor(u, v, k) || mask.get(u as u32, v as u32)
                });
                hits += inside as usize;
            }
            hits
        })
        .sum();
    let p = hits as f64 / samples as f64;
    let bv_cm3 = bv.volume_mm3() / MM3_PER_CM3;
    MonteCarloVolume {
        volume_cm3: p * bv_cm3,
        half_width_cm3: Z99 * (p * (1.0 - p) / samples as f64).sqrt() * bv_cm3,
        samples,
    }
}
