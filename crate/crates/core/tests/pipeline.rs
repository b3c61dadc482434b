use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use silhuetta::camera::{save_rig, CameraRig, Intrinsics};
use silhuetta::hull::{hull_volume, BoundingVolume, VoxelGrid};
use silhuetta::image::{write_ppm, RgbImage};
use silhuetta::pipeline::{run_pipeline, InputSource, PipelineConfig, PipelineError};
use silhuetta::silhouette::{PreprocessConfig, SilhouetteError};
use silhuetta::synth::{render_color, Scene};

fn exp1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes/exp1_sphere_shadow.json")
}

fn config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(InputSource::Scene(exp1()), out);
    cfg.grid_dims = [40; 3];
    cfg.preprocess = PreprocessConfig { invert: true, ..PreprocessConfig::default() };
    cfg
}

#[test]
fn no_carve_mesh_volume_equals_hull_volume() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.carve = false;
    cfg.write_stl = true;
    let run = run_pipeline(&cfg).unwrap();
    let grid = VoxelGrid::load(&run.grid).unwrap();
    assert_eq!(run.summary.final_volume_cm3, hull_volume(&grid));
    assert_eq!(run.summary.hull_volume_cm3, run.summary.final_volume_cm3);
    assert_eq!(run.summary.carve_iterations, 0);
    assert_eq!(run.masks.len(), 4);
    assert!(run.stl.unwrap().exists());
    let csv = std::fs::read_to_string(run.report.unwrap()).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("exp1_sphere_shadow,optimized,"));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&run.summary_path).unwrap()).unwrap();
    assert_eq!(summary["timings"].as_array().unwrap().len(), 6);
}

#[test]
fn carving_never_grows_the_hull() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_pipeline(&config(dir.path())).unwrap().summary;
    assert!(s.final_volume_cm3 <= s.hull_volume_cm3);
    assert_eq!(s.hull_solid_voxels - s.final_solid_voxels, s.carved_voxels);
}

#[test]
fn config_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.grid_dims = [7, 64, 64];
    assert!(matches!(run_pipeline(&cfg), Err(PipelineError::Config(_))));
    let mut cfg = config(dir.path());
    cfg.input = InputSource::Images { rig: "rig.json".into(), images: vec!["a.ppm".into()] };
    assert!(matches!(run_pipeline(&cfg), Err(PipelineError::Config(_))), "image input without a bounding volume");
    let mut cfg = config(dir.path());
    cfg.consistency.min_views = 1;
    assert!(matches!(run_pipeline(&cfg), Err(PipelineError::Config(_))));
}

fn write_rig(dir: &Path) -> (PathBuf, CameraRig) {
    let rig = CameraRig::desk_rig(Vector3::zeros(), 600.0, Intrinsics::default());
    let path = dir.join("rig.json");
    save_rig(&rig, &path).unwrap();
    (path, rig)
}

#[test]
fn blank_view_aborts_with_its_id() {
    let dir = tempfile::tempdir().unwrap();
    let (rig_path, rig) = write_rig(dir.path());
    let scene = Scene::load(exp1()).unwrap();
    let images: Vec<PathBuf> = rig
        .cameras()
        .iter()
        .map(|c| {
            let p = dir.path().join(format!("{}.ppm", c.id));
            let img = if c.id == "lateral1" { RgbImage::filled(640, 480, [255; 3]) } else { render_color(&scene, c) };
            write_ppm(&img, &p).unwrap();
            p
        })
        .collect();
    let mut cfg = config(&dir.path().join("out"));
    cfg.input = InputSource::Images { rig: rig_path, images };
    cfg.bounding_volume = Some(BoundingVolume::cube([0.0; 3], 200.0).unwrap());
    match run_pipeline(&cfg) {
        Err(PipelineError::Silhouette { view, source }) => {
            assert_eq!(view, "lateral1");
            assert_eq!(source, SilhouetteError::EmptySilhouette);
        }
        other => panic!("expected a silhouette-stage error, got {other:?}"),
    }
}

#[test]
fn image_input_matches_scene_input() {
    let dir = tempfile::tempdir().unwrap();
    let (rig_path, rig) = write_rig(dir.path());
    let scene = Scene::load(exp1()).unwrap();
    let images: Vec<PathBuf> = rig
        .cameras()
        .iter()
        .map(|c| {
            let p = dir.path().join(format!("{}.ppm", c.id));
            write_ppm(&render_color(&scene, c), &p).unwrap();
            p
        })
        .collect();
    let from_scene = run_pipeline(&config(&dir.path().join("a"))).unwrap();
    let mut cfg = config(&dir.path().join("b"));
    cfg.input = InputSource::Images { rig: rig_path, images };
    cfg.bounding_volume = Some(scene.bounding_volume);
    let from_images = run_pipeline(&cfg).unwrap();
    assert!(from_images.report.is_none(), "no reference volume, no report");
    assert_eq!(from_images.summary.final_volume_cm3, from_scene.summary.final_volume_cm3);
    assert_eq!(std::fs::read(from_images.obj).unwrap(), std::fs::read(from_scene.obj).unwrap());
}

#[test]
fn wrong_image_count_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (rig_path, _) = write_rig(dir.path());
    let p = dir.path().join("one.ppm");
    write_ppm(&RgbImage::filled(640, 480, [0; 3]), &p).unwrap();
    let mut cfg = config(&dir.path().join("out"));
    cfg.input = InputSource::Images { rig: rig_path, images: vec![p] };
    cfg.bounding_volume = Some(BoundingVolume::cube([0.0; 3], 200.0).unwrap());
    assert!(matches!(run_pipeline(&cfg), Err(PipelineError::Input(_))));
}
