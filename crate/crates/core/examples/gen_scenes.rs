//! Regenerates `rigs/paper4.json` and the bundled `scenes/*.json`.
//!
//!     cargo run -p silhuetta-core --example gen_scenes -- <repo root>

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use silhuetta::camera::{save_rig, CameraRig, Intrinsics};
use silhuetta::hull::BoundingVolume;
use silhuetta::synth::{Pattern, Primitive, RigSource, Scene, ShadowPatch, Shape};

const RIG_PATH: &str = "../rigs/paper4.json";
const WHITE: [u8; 3] = [255, 255, 255];

/// Projected shadow patch of a world box in every view except `hidden`.
fn box_shadows(rig: &CameraRig, min: [f64; 3], max: [f64; 3], darkening: f64, hidden: &[&str]) -> Vec<ShadowPatch> {
    rig.cameras()
        .iter()
        .filter(|c| !hidden.contains(&c.id.as_str()))
        .filter_map(|c| ShadowPatch::from_box_projection(c, min, max, darkening))
        .collect()
}

fn textured(mut p: Primitive, amplitude: f64, cycles: f64, noise: u8) -> Primitive {
    p.pattern = Pattern::HueWheel { amplitude, cycles };
    p.texture_noise = noise;
    p
}

/// Single sphere beside a detached table shadow. Plain Otsu merges the shadow
/// into every silhouette; blob selection drops it wherever it is detached.
fn exp1(rig: &CameraRig) -> Scene {
    let sphere = textured(Primitive::sphere(50.0, [0.0; 3], [128, 128, 128]), 100.0, 36.0, 6);
    Scene {
        name: "exp1_sphere_shadow".into(),
        primitives: vec![sphere],
        rig: rig.clone(),
        background: WHITE,
        shadows: box_shadows(rig, [40.0, 55.0, -50.0], [85.0, 95.0, -20.0], 0.45, &[]),
        bounding_volume: BoundingVolume::cube([0.0; 3], 200.0).unwrap(),
        seed: 1,
        measured: None,
    }
}

/// Two spheres 2.7 mm apart whose projections merge in every view, each with
/// its own shadow.
fn exp2(rig: &CameraRig) -> Scene {
    let big = textured(Primitive::sphere(40.0, [0.0, 0.0, -15.0], [110, 100, 90]), 90.0, 30.0, 6);
    let small = textured(Primitive::sphere(22.0, [25.0, 43.3, 26.0], [100, 110, 120]), 90.0, 20.0, 6);
    let mut shadows = box_shadows(rig, [-85.0, -60.0, -55.0], [-55.0, -25.0, -40.0], 0.5, &[]);
    shadows.extend(box_shadows(rig, [55.0, -75.0, -55.0], [85.0, -50.0, -40.0], 0.5, &[]));
    Scene {
        name: "exp2_gap_pair".into(),
        primitives: vec![big, small],
        rig: rig.clone(),
        background: WHITE,
        shadows,
        bounding_volume: BoundingVolume::cube([0.0; 3], 200.0).unwrap(),
        seed: 2,
        measured: None,
    }
}

/// A large sphere partly occluded by two small objects; only the sphere is
/// measured.
fn exp3(rig: &CameraRig) -> Scene {
    let big = textured(Primitive::sphere(45.0, [0.0, 0.0, 0.0], [120, 115, 110]), 90.0, 30.0, 6);
    let pebble = textured(Primitive::sphere(12.0, [70.0, 20.0, -25.0], [90, 80, 70]), 40.0, 1.0, 6);
    let brick = textured(Primitive::new(Shape::Box { half_extents: [10.0, 10.0, 8.0] }, [-40.0, -70.0, -30.0], [85, 85, 75]), 40.0, 1.0, 6);
    Scene {
        name: "exp3_cluttered".into(),
        primitives: vec![big, pebble, brick],
        rig: rig.clone(),
        background: WHITE,
        shadows: box_shadows(rig, [-80.0, 40.0, -40.0], [-50.0, 75.0, -30.0], 0.5, &[]),
        bounding_volume: BoundingVolume::cube([0.0; 3], 200.0).unwrap(),
        seed: 3,
        measured: Some(vec![0]),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args().nth(1).unwrap_or_else(|| ".".into());
    let root = Path::new(&root);
    fs::create_dir_all(root.join("rigs"))?;
    fs::create_dir_all(root.join("scenes"))?;
    let rig = CameraRig::desk_rig(Vector3::zeros(), 600.0, Intrinsics::default());
    save_rig(&rig, root.join("rigs/paper4.json"))?;
    for scene in [exp1(&rig), exp2(&rig), exp3(&rig)] {
        let file = scene.to_file_repr(RigSource::Path(RIG_PATH.into()))?;
        let path = root.join("scenes").join(format!("{}.json", scene.name));
        fs::write(&path, serde_json::to_string_pretty(&file)? + "\n")?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
