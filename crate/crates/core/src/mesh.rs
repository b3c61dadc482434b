//! Cuberille surface meshes of voxel grids, signed volume, OBJ/STL output.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::hull::VoxelGrid;
use crate::MM3_PER_CM3;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("voxel grid has no solid voxels")]
    EmptyGrid,
    #[error("mesh is not closed")]
    NotClosed,
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("malformed OBJ at line {line}: {msg}")]
    Obj { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Indexed triangle mesh in mm, triangles counter-clockwise seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<Vector3<f64>>,
}

impl TriangleMesh {
    /// Builds a mesh and computes right-hand-rule unit normals.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        let mut normals = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as usize >= vertices.len()) {
                return Err(MeshError::Invalid(format!("triangle {t} references a missing vertex")));
            }
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let n = (b - a).cross(&(c - a));
            let len = n.norm();
            if !(len > 0.0) {
                return Err(MeshError::Invalid(format!("triangle {t} is degenerate")));
            }
            normals.push(n / len);
        }
        Ok(TriangleMesh { vertices, triangles, normals })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            triangles: self.triangles.clone(),
            normals: self.normals.clone(),
        }
    }

    /// Same surface with every triangle wound the other way.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
            normals: self.normals.iter().map(|n| -n).collect(),
        }
    }

    /// Drops triangle `t` (test helper for building open meshes).
    pub fn without_triangle(&self, t: usize) -> TriangleMesh {
        let mut m = self.clone();
        m.triangles.remove(t);
        m.normals.remove(t);
        m
    }
}

/// Every undirected edge must be used as often in one direction as in the
/// other, and at least once each way. A two-manifold closed mesh uses each
/// edge exactly once per direction; voxel sets that touch only along an edge
/// produce edges used twice per direction, which still bound a closed volume.
pub fn is_closed(m: &TriangleMesh) -> bool {
    if m.triangles.is_empty() {
        return false;
    }
    let mut balance: HashMap<(u32, u32), i64> = HashMap::new();
    for &[a, b, c] in &m.triangles {
        for (p, q) in [(a, b), (b, c), (c, a)] {
            if p == q {
                return false;
            }
            let (key, d) = if p < q { ((p, q), 1) } else { ((q, p), -1) };
            *balance.entry(key).or_insert(0) += d;
        }
    }
    balance.values().all(|&v| v == 0)
}

/// Strict two-manifold check: each undirected edge in exactly two triangles
/// with opposite orientation.
pub fn is_manifold_closed(m: &TriangleMesh) -> bool {
    if m.triangles.is_empty() {
        return false;
    }
    let mut uses: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    for &[a, b, c] in &m.triangles {
        for (p, q) in [(a, b), (b, c), (c, a)] {
            let e = uses.entry((p.min(q), p.max(q))).or_insert((0, 0));
            if p < q {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    uses.values().all(|&u| u == (1, 1))
}

/// Σ det[v0, v1, v2] / 6 over all triangles, in mm³, before taking the
/// absolute value. Positive for outward-oriented closed meshes.
pub fn signed_volume_mm3(m: &TriangleMesh) -> f64 {
    m.triangles
        .iter()
        .map(|&[a, b, c]| {
            let (v0, v1, v2) = (&m.vertices[a as usize], &m.vertices[b as usize], &m.vertices[c as usize]);
            v0.dot(&v1.cross(v2))
        })
        .sum::<f64>()
        / 6.0
}

/// Enclosed volume in cm³ from tetrahedra joining each triangle to the origin.
pub fn signed_volume(m: &TriangleMesh) -> Result<f64, MeshError> {
    if !is_closed(m) {
        return Err(MeshError::NotClosed);
    }
    Ok(signed_volume_mm3(m).abs() / MM3_PER_CM3)
}

/// Cuberille extraction: each face between a solid voxel and an outside voxel
/// (or the grid boundary) becomes two triangles wound counter-clockwise as
/// seen from outside. Corners are shared through their integer lattice index.
pub fn extract_surface_mesh(g: &VoxelGrid) -> Result<TriangleMesh, MeshError> {
    if g.solid_count() == 0 {
        return Err(MeshError::EmptyGrid);
    }
    let [n1, n2, n3] = g.dims();
    let h = g.h();
    let min = g.bv().min;
    let corner_dims = [n1 + 1, n2 + 1, n3 + 1];
    let mut corner_ids = vec![u32::MAX; corner_dims[0] * corner_dims[1] * corner_dims[2]];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();

    let mut corner = |c: [usize; 3], vertices: &mut Vec<Vector3<f64>>| -> u32 {
        let key = (c[0] * corner_dims[1] + c[1]) * corner_dims[2] + c[2];
        if corner_ids[key] == u32::MAX {
            corner_ids[key] = vertices.len() as u32;
            vertices.push(Vector3::new(
                min[0] + c[0] as f64 * h[0],
                min[1] + c[1] as f64 * h[1],
                min[2] + c[2] as f64 * h[2],
            ));
        }
        corner_ids[key]
    };

    for idx in 0..g.len() {
        if !g.is_solid_idx(idx) {
            continue;
        }
        let (i, j, k) = g.coords(idx);
        let base = [i, j, k];
        // neighbors6 order: -x, +x, -y, +y, -z, +z
        for (face, nb) in g.neighbors6(idx).into_iter().enumerate() {
            if nb.is_some_and(|n| g.is_solid_idx(n)) {
                continue;
            }
            let axis = face / 2;
            let positive = face % 2 == 1;
            let b = (axis + 1) % 3;
            let c = (axis + 2) % 3;
            let mut origin = base;
            if positive {
                origin[axis] += 1;
            }
            let offset = |db: usize, dc: usize| {
                let mut p = origin;
                p[b] += db;
                p[c] += dc;
                p
            };
            // e_b × e_c = +e_axis, so (0, b, b+c, c) faces +axis.
            let quad = if positive {
                [offset(0, 0), offset(1, 0), offset(1, 1), offset(0, 1)]
            } else {
                [offset(0, 0), offset(0, 1), offset(1, 1), offset(1, 0)]
            };
            let q = quad.map(|p| corner(p, &mut vertices));
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

fn fmt_f64(out: &mut String, v: f64) {
    // Display prints the shortest representation that parses back exactly.
    write!(out, "{v}").unwrap();
}

pub fn obj_string(m: &TriangleMesh) -> String {
    let mut out = String::with_capacity(m.vertices.len() * 32 + m.triangles.len() * 24);
    for v in &m.vertices {
        out.push_str("v ");
        fmt_f64(&mut out, v.x);
        out.push(' ');
        fmt_f64(&mut out, v.y);
        out.push(' ');
        fmt_f64(&mut out, v.z);
        out.push('\n');
    }
    for t in &m.triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    out
}

pub fn write_obj(m: &TriangleMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    fs::write(path, obj_string(m))?;
    Ok(())
}

/// Reads `v` and triangular `f` records; other records are ignored.
pub fn parse_obj(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let err = |msg: &str| MeshError::Obj { line: line_no, msg: msg.to_string() };
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|_| err("bad vertex coordinate")))
                    .collect::<Result<_, _>>()?;
                if coords.len() != 3 {
                    return Err(err("vertex needs 3 coordinates"));
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = parts
                    .map(|s| {
                        let first = s.split('/').next().unwrap_or("");
                        match first.parse::<i64>() {
                            Ok(i) if i >= 1 && (i as usize) <= vertices.len() => Ok((i - 1) as u32),
                            Ok(i) if i < 0 && (-i) as usize <= vertices.len() => Ok((vertices.len() as i64 + i) as u32),
                            _ => Err(err("bad face index")),
                        }
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(err("only triangular faces are supported"));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<TriangleMesh, MeshError> {
    parse_obj(&fs::read_to_string(path)?)
}

/// Binary STL: 80-byte header, triangle count, then per triangle the normal,
/// three vertices (little-endian f32) and a zero attribute word.
pub fn stl_bytes(m: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * m.triangles.len());
    let mut header = [0u8; 80];
    let tag = b"silhuetta cuberille mesh";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(m.triangles.len() as u32).to_le_bytes());
    for (tri, n) in m.triangles.iter().zip(&m.normals) {
        let vs = tri.map(|i| m.vertices[i as usize]);
        for v in std::iter::once(n).chain(vs.iter()) {
            for c in v.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

pub fn write_stl(m: &TriangleMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    fs::write(path, stl_bytes(m))?;
    Ok(())
}
