use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;
use silhuetta::hull::{BoundingVolume, VoxelGrid};
use silhuetta::mesh::{extract_surface_mesh, is_closed, is_manifold_closed, obj_string, parse_obj, read_obj, signed_volume, write_obj};
use silhuetta::TriangleMesh;

fn golden(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn cube10() -> TriangleMesh {
    let bv = BoundingVolume::new([0.0; 3], [10.0; 3]).unwrap();
    extract_surface_mesh(&VoxelGrid::from_solid(bv, [1, 1, 1], &[true]).unwrap()).unwrap()
}

/// Icosahedron refined `levels` times, vertices pushed onto the sphere.
fn icosphere(r: f64, levels: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vector3::from(*p).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) / 2.0).normalize());
                verts.len() as u32 - 1
            })
        };
        faces = faces
            .iter()
            .flat_map(|&[a, b, c]| {
                let (ab, bc, ca) = (midpoint(a, b, &mut verts), midpoint(b, c, &mut verts), midpoint(c, a, &mut verts));
                [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
            })
            .collect();
    }
    TriangleMesh::new(verts.into_iter().map(|v| v * r).collect(), faces).unwrap()
}

#[test]
fn icosphere_volume_is_close_to_the_ball() {
    let m = icosphere(10.0, 3);
    assert_eq!(m.triangles().len(), 1280);
    assert!(is_manifold_closed(&m));
    let v = signed_volume(&m).unwrap();
    let ball = 4.0 / 3.0 * std::f64::consts::PI;
    assert!(v < ball && (ball - v) / ball < 0.01, "{v}");
}

#[test]
fn cube_obj_matches_golden_file() {
    let expected = std::fs::read_to_string(golden("cube10mm.obj")).unwrap();
    assert_eq!(obj_string(&cube10()), expected);
}

#[test]
fn obj_roundtrip_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.obj");
    for m in [cube10(), icosphere(7.5, 2)] {
        write_obj(&m, &path).unwrap();
        assert_eq!(read_obj(&path).unwrap(), m);
    }
}

#[test]
fn golden_cube_is_one_cubic_centimeter() {
    let m = read_obj(golden("cube10mm.obj")).unwrap();
    assert!(is_manifold_closed(&m));
    assert!((signed_volume(&m).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn voxelized_ball_meshes_to_its_voxel_count() {
    let n = 64;
    let bv = BoundingVolume::cube([0.0; 3], 64.0).unwrap();
    let solid: Vec<bool> = (0..n * n * n)
        .map(|idx| {
            let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
            let c = |a: usize| a as f64 + 0.5 - 32.0;
            c(i).powi(2) + c(j).powi(2) + c(k).powi(2) <= 28.0f64.powi(2)
        })
        .collect();
    let g = VoxelGrid::from_solid(bv, [n; 3], &solid).unwrap();
    let m = extract_surface_mesh(&g).unwrap();
    assert!(is_closed(&m));
    let expected = g.solid_count() as f64 / 1000.0;
    assert!((signed_volume(&m).unwrap() - expected).abs() <= 1e-9 * expected);
}

#[test]
fn malformed_obj_reports_the_line() {
    let err = parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 9\n").unwrap_err();
    assert!(err.to_string().contains('3'), "{err}");
}
