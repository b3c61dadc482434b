//! End-to-end reconstruction: silhouettes → visual hull → carving → mesh →
//! volume → report, with every intermediate written to an output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::camera::{load_rig, CameraRig};
use crate::carving::{carve, CarveError, ColorImageSet, ConsistencyParams};
use crate::hull::{build_grid, classify_voxels, hull_volume, BoundingVolume, HullError, SilhouetteSet, SURFACE};
use crate::image::{read_color, write_pgm, RgbImage};
use crate::mesh::{extract_surface_mesh, signed_volume, write_obj, write_stl, MeshError};
use crate::metrics::{report, MetricsError, VolumeRecord};
use crate::silhouette::{extract_silhouette, PreprocessConfig, SilhouetteError};
use crate::synth::{render_color, Scene};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input stage: {0}")]
    Input(String),
    #[error("silhouette stage, view '{view}': {source}")]
    Silhouette { view: String, source: SilhouetteError },
    #[error("classification stage: {0}")]
    Hull(#[from] HullError),
    #[error("{stage} stage left no solid voxels")]
    EmptyGrid { stage: &'static str },
    #[error("carving stage: {0}")]
    Carve(#[from] CarveError),
    #[error("mesh stage: {0}")]
    Mesh(#[from] MeshError),
    #[error("report stage: {0}")]
    Report(#[from] MetricsError),
    #[error("writing {path}: {msg}")]
    Output { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    /// Synthetic scene file; color views are rendered from it.
    Scene(PathBuf),
    /// Calibrated rig plus one color image per camera, in rig order.
    Images { rig: PathBuf, images: Vec<PathBuf> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: InputSource,
    /// Required for image input; overrides the scene's volume otherwise.
    pub bounding_volume: Option<BoundingVolume>,
    pub grid_dims: [usize; 3],
    pub preprocess: PreprocessConfig,
    pub consistency: ConsistencyParams,
    pub carve: bool,
    pub out_dir: PathBuf,
    pub write_stl: bool,
    /// Reference volume in cm³; taken from the scene when absent.
    pub real_volume: Option<f64>,
    pub experiment: Option<String>,
    /// Overrides the scene's render seed.
    pub seed: Option<u64>,
}

impl PipelineConfig {
    pub fn new(input: InputSource, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input,
            bounding_volume: None,
            grid_dims: [128; 3],
            preprocess: PreprocessConfig::default(),
            consistency: ConsistencyParams::default(),
            carve: true,
            out_dir: out_dir.into(),
            write_stl: false,
            real_volume: None,
            experiment: None,
            seed: None,
        }
    }

    pub fn method(&self) -> &'static str {
        if self.preprocess.naive {
            "naive"
        } else {
            "optimized"
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.grid_dims.iter().any(|&n| n < 8) {
            return Err(PipelineError::Config(format!("grid dims must be ≥ 8 per axis, got {:?}", self.grid_dims)));
        }
        if let InputSource::Images { images, .. } = &self.input {
            if images.is_empty() {
                return Err(PipelineError::Config("no input images".into()));
            }
            if self.bounding_volume.is_none() {
                return Err(PipelineError::Config("image input needs an explicit bounding volume".into()));
            }
        }
        if let Some(v) = self.real_volume {
            if !(v > 0.0) {
                return Err(PipelineError::Config(format!("real volume must be positive, got {v}")));
            }
        }
        self.preprocess.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.consistency.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ViewSummary {
    pub id: String,
    pub foreground_pixels: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub method: String,
    pub grid_dims: [usize; 3],
    pub views: Vec<ViewSummary>,
    pub hull_solid_voxels: usize,
    pub hull_surface_voxels: usize,
    pub hull_volume_cm3: f64,
    pub carve_iterations: usize,
    pub carved_voxels: usize,
    pub carve_converged: bool,
    pub final_solid_voxels: usize,
    pub mesh_vertices: usize,
    pub mesh_triangles: usize,
    pub final_volume_cm3: f64,
    pub real_volume_cm3: Option<f64>,
    pub relative_error_pct: Option<f64>,
    pub precision_pct: Option<f64>,
    /// Wall time per stage; informational only.
    pub timings: Vec<StageTiming>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub masks: Vec<PathBuf>,
    pub grid: PathBuf,
    pub obj: PathBuf,
    pub stl: Option<PathBuf>,
    /// Only written when a reference volume is known.
    pub report: Option<PathBuf>,
    pub summary_path: PathBuf,
    pub summary: RunSummary,
}

struct Inputs {
    name: String,
    rig: CameraRig,
    images: Vec<RgbImage>,
    bv: BoundingVolume,
    real_volume: Option<f64>,
}

fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs, PipelineError> {
    let input_err = |e: &dyn std::fmt::Display| PipelineError::Input(e.to_string());
    match &cfg.input {
        InputSource::Scene(path) => {
            let mut scene = Scene::load(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
            if let Some(seed) = cfg.seed {
                scene.seed = seed;
            }
            let images = scene.rig.cameras().iter().map(|c| render_color(&scene, c)).collect();
            let real = match cfg.real_volume {
                Some(v) => Some(v),
                None => Some(scene.ground_truth_volume().map_err(|e| input_err(&e))?),
            };
            Ok(Inputs {
                name: scene.name.clone(),
                bv: cfg.bounding_volume.unwrap_or(scene.bounding_volume),
                rig: scene.rig,
                images,
                real_volume: real,
            })
        }
        InputSource::Images { rig, images } => {
            let rig_cams = load_rig(rig).map_err(|e| PipelineError::Input(format!("{}: {e}", rig.display())))?;
            if rig_cams.len() != images.len() {
                return Err(PipelineError::Input(format!(
                    "rig has {} cameras but {} images were given",
                    rig_cams.len(),
                    images.len()
                )));
            }
            let images = images
                .iter()
                .map(|p| read_color(p).map_err(|e| PipelineError::Input(format!("{}: {e}", p.display()))))
                .collect::<Result<Vec<_>, _>>()?;
            let bv = cfg.bounding_volume.expect("validated");
            bv.validate()?;
            Ok(Inputs { name: "run".into(), rig: rig_cams, images, bv, real_volume: cfg.real_volume })
        }
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Output { path: path.to_path_buf(), msg: e.to_string() }
}

/// Runs every stage and writes `mask_<view>.pgm`, `grid.vox`, `mesh.obj`
/// (and `mesh.stl`), `report.csv` and `summary.json` into `cfg.out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunArtifacts, PipelineError> {
    cfg.validate()?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: &'static str, timings: &mut Vec<StageTiming>| {
        timings.push(StageTiming { stage, seconds: clock.elapsed().as_secs_f64() });
        clock = Instant::now();
    };

    let inputs = load_inputs(cfg)?;
    let experiment = cfg.experiment.clone().unwrap_or_else(|| inputs.name.clone());
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| output_err(out, e))?;
    lap("input", &mut timings);

    let mut masks = Vec::with_capacity(inputs.images.len());
    let mut mask_paths = Vec::with_capacity(inputs.images.len());
    let mut views = Vec::with_capacity(inputs.images.len());
    for (img, cam) in inputs.images.iter().zip(inputs.rig.cameras()) {
        if img.width() != cam.intrinsics.width || img.height() != cam.intrinsics.height {
            return Err(PipelineError::Input(format!(
                "view '{}': image is {}x{}, sensor is {}x{}",
                cam.id,
                img.width(),
                img.height(),
                cam.intrinsics.width,
                cam.intrinsics.height
            )));
        }
        let mask = extract_silhouette(img, &cfg.preprocess)
            .map_err(|source| PipelineError::Silhouette { view: cam.id.clone(), source })?;
        let path = out.join(format!("mask_{}.pgm", cam.id));
        write_pgm(&mask.to_gray(), &path).map_err(|e| output_err(&path, e))?;
        views.push(ViewSummary { id: cam.id.clone(), foreground_pixels: mask.count() });
        mask_paths.push(path);
        masks.push((mask, cam.clone()));
    }
    lap("silhouette", &mut timings);

    let sils = SilhouetteSet::new(masks)?;
    let hull = classify_voxels(&build_grid(inputs.bv, cfg.grid_dims)?, &sils);
    if hull.solid_count() == 0 {
        return Err(PipelineError::EmptyGrid { stage: "classification" });
    }
    let hull_solid = hull.solid_count();
    let hull_surface = hull.count_label(SURFACE);
    let hull_vol = hull_volume(&hull);
    lap("classification", &mut timings);

    let (grid, iterations, carved, converged) = if cfg.carve {
        let imgs = ColorImageSet::new(inputs.images.into_iter().zip(inputs.rig.cameras().iter().cloned()).collect())?;
        let res = carve(&hull, &imgs, &cfg.consistency)?;
        if res.grid.solid_count() == 0 {
            return Err(PipelineError::EmptyGrid { stage: "carving" });
        }
        (res.grid, res.iterations, res.removed, res.converged)
    } else {
        (hull, 0, 0, true)
    };
    let grid_path = out.join("grid.vox");
    grid.save(&grid_path).map_err(|e| output_err(&grid_path, e))?;
    lap("carving", &mut timings);

    let mesh = extract_surface_mesh(&grid)?;
    let volume = signed_volume(&mesh)?;
    let obj = out.join("mesh.obj");
    write_obj(&mesh, &obj)?;
    let stl = if cfg.write_stl {
        let p = out.join("mesh.stl");
        write_stl(&mesh, &p)?;
        Some(p)
    } else {
        None
    };
    lap("mesh", &mut timings);

    let (report_path, re, prec) = match inputs.real_volume {
        Some(real) => {
            let rec = VolumeRecord::new(experiment.clone(), cfg.method(), volume, real);
            let rep = report(std::slice::from_ref(&rec))?;
            let p = out.join("report.csv");
            fs::write(&p, rep.to_csv()).map_err(|e| output_err(&p, e))?;
            (Some(p), Some(rec.relative_error()?), Some(rec.precision()?))
        }
        None => (None, None, None),
    };
    lap("report", &mut timings);

    let summary = RunSummary {
        experiment,
        method: cfg.method().into(),
        grid_dims: cfg.grid_dims,
        views,
        hull_solid_voxels: hull_solid,
        hull_surface_voxels: hull_surface,
        hull_volume_cm3: hull_vol,
        carve_iterations: iterations,
        carved_voxels: carved,
        carve_converged: converged,
        final_solid_voxels: grid.solid_count(),
        mesh_vertices: mesh.vertices().len(),
        mesh_triangles: mesh.triangles().len(),
        final_volume_cm3: volume,
        real_volume_cm3: inputs.real_volume,
        relative_error_pct: re,
        precision_pct: prec,
        timings,
    };
    let summary_path = out.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&summary_path, json + "\n").map_err(|e| output_err(&summary_path, e))?;

    Ok(RunArtifacts { masks: mask_paths, grid: grid_path, obj, stl, report: report_path, summary_path, summary })
}
