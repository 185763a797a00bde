use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::SceneError;
use crate::geometry::Aabb;

/// Indexed triangle mesh in object-local coordinates (meters).
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Vec<Vector3<f64>>,
    pub uv: Option<Vec<[f64; 2]>>,
    /// Optional per-vertex part id (one per OBJ object/group when the file has several).
    pub part_labels: Option<Vec<u32>>,
}

impl Mesh {
    /// Builds a mesh, computing area-weighted vertex normals.
    pub fn from_triangles(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Self {
        let normals = area_weighted_normals(&vertices, &triangles);
        Self {
            vertices,
            triangles,
            normals,
            uv: None,
            part_labels: None,
        }
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Box centered at the origin, flat-shaded (24 vertices).
    pub fn cuboid(half: Vector3<f64>) -> Self {
        let mut vertices = Vec::with_capacity(24);
        let mut normals = Vec::with_capacity(24);
        let mut uv = Vec::with_capacity(24);
        let mut triangles = Vec::with_capacity(12);
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let mut n = Vector3::zeros();
                n[axis] = sign;
                let u_axis = (axis + 1) % 3;
                let v_axis = (axis + 2) % 3;
                let base = vertices.len() as u32;
                for (a, b) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                    let mut p = Vector3::zeros();
                    p[axis] = sign * half[axis];
                    p[u_axis] = a * half[u_axis];
                    p[v_axis] = b * half[v_axis];
                    vertices.push(Point3::from(p));
                    normals.push(n);
                    uv.push([(a + 1.0) * 0.5, (b + 1.0) * 0.5]);
                }
                // u × v = axis, so the (0,1,2) winding faces +axis.
                if sign > 0.0 {
                    triangles.push([base, base + 1, base + 2]);
                    triangles.push([base, base + 2, base + 3]);
                } else {
                    triangles.push([base, base + 2, base + 1]);
                    triangles.push([base, base + 3, base + 2]);
                }
            }
        }
        Self {
            vertices,
            triangles,
            normals,
            uv: Some(uv),
            part_labels: None,
        }
    }

    /// Geodesic sphere obtained by subdividing an icosahedron.
    pub fn icosphere(radius: f64, subdivisions: u32) -> Self {
        let t = (1.0 + 5.0_f64.sqrt()) / 2.0;
        let mut verts: Vec<Vector3<f64>> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoint = std::collections::HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            let mut mid = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| -> u32 {
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                    (verts.len() - 1) as u32
                })
            };
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut verts);
                let bc = mid(b, c, &mut verts);
                let ca = mid(c, a, &mut verts);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        Self {
            vertices: verts.iter().map(|v| Point3::from(v * radius)).collect(),
            normals: verts,
            triangles: faces,
            uv: None,
            part_labels: None,
        }
    }

    /// Unit-normal rectangle in the local XY plane facing +Z.
    pub fn quad(width: f64, height: f64) -> Self {
        let (w, h) = (width * 0.5, height * 0.5);
        Self {
            vertices: vec![
                Point3::new(-w, -h, 0.0),
                Point3::new(w, -h, 0.0),
                Point3::new(w, h, 0.0),
                Point3::new(-w, h, 0.0),
            ],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            normals: vec![Vector3::z(); 4],
            uv: Some(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
            part_labels: None,
        }
    }

    /// Wavefront OBJ text with `v`, `vn`, optional `vt` and `f` records.
    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for n in &self.normals {
            let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
        }
        if let Some(uv) = &self.uv {
            for t in uv {
                let _ = writeln!(s, "vt {} {}", t[0], t[1]);
            }
        }
        for tri in &self.triangles {
            let idx: Vec<String> = tri
                .iter()
                .map(|&i| {
                    let i = i + 1;
                    if self.uv.is_some() {
                        format!("{i}/{i}/{i}")
                    } else {
                        format!("{i}//{i}")
                    }
                })
                .collect();
            let _ = writeln!(s, "f {}", idx.join(" "));
        }
        s
    }
}

/// Area-weighted average of adjacent face normals per vertex.
pub fn area_weighted_normals(vertices: &[Point3<f64>], triangles: &[[u32; 3]]) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); vertices.len()];
    for tri in triangles {
        let [a, b, c] = tri.map(|i| vertices[i as usize]);
        // The unnormalized cross product has length 2·area.
        let n = (b - a).cross(&(c - a));
        for &i in tri {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vector3::z()
            }
        })
        .collect()
}

/// Loads an ASCII Wavefront OBJ file. Polygons are fan-triangulated; all
/// objects and groups in the file are merged into one mesh.
pub fn load_obj(path: &Path) -> Result<Mesh, SceneError> {
    let opts = tobj::LoadOptions {
        single_index: true,
        triangulate: true,
        ignore_points: true,
        ignore_lines: true,
    };
    let (models, _materials) = tobj::load_obj(path, &opts).map_err(|e| SceneError::Mesh {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if models.is_empty() {
        return Err(SceneError::Mesh {
            path: path.to_path_buf(),
            message: "file contains no geometry".into(),
        });
    }

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut normals = Vec::new();
    let mut uv = Vec::new();
    let mut parts = Vec::new();
    let all_have_normals = models.iter().all(|m| !m.mesh.normals.is_empty());
    let all_have_uv = models.iter().all(|m| !m.mesh.texcoords.is_empty());

    for (part, model) in models.iter().enumerate() {
        let m = &model.mesh;
        let base = vertices.len() as u32;
        let count = m.positions.len() / 3;
        for i in 0..count {
            vertices.push(Point3::new(
                m.positions[3 * i],
                m.positions[3 * i + 1],
                m.positions[3 * i + 2],
            ));
            parts.push(part as u32 + 1);
        }
        if all_have_normals {
            for i in 0..count {
                normals.push(Vector3::new(m.normals[3 * i], m.normals[3 * i + 1], m.normals[3 * i + 2]));
            }
        }
        if all_have_uv {
            for i in 0..count {
                uv.push([m.texcoords[2 * i], m.texcoords[2 * i + 1]]);
            }
        }
        for t in m.indices.chunks_exact(3) {
            triangles.push([base + t[0], base + t[1], base + t[2]]);
        }
    }

    let normals = if all_have_normals {
        normals
            .into_iter()
            .map(|n: Vector3<f64>| {
                let len = n.norm();
                if (len - 1.0).abs() <= 1e-12 {
                    n
                } else if len > 0.0 {
                    n / len
                } else {
                    Vector3::z()
                }
            })
            .collect()
    } else {
        area_weighted_normals(&vertices, &triangles)
    };

    Ok(Mesh {
        vertices,
        triangles,
        normals,
        uv: all_have_uv.then_some(uv),
        part_labels: (models.len() > 1).then_some(parts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuboid_faces_point_outward() {
        let m = Mesh::cuboid(Vector3::new(0.5, 1.0, 1.5));
        assert_eq!(m.vertices.len(), 24);
        for tri in &m.triangles {
            let [a, b, c] = tri.map(|i| m.vertices[i as usize]);
            let n = (b - a).cross(&(c - a)).normalize();
            let centroid = (a.coords + b.coords + c.coords) / 3.0;
            assert!(n.dot(&centroid) > 0.0);
            assert!((n - m.normals[tri[0] as usize]).norm() < 1e-12);
        }
    }

    #[test]
    fn icosphere_counts() {
        let m = Mesh::icosphere(2.0, 2);
        assert_eq!(m.triangles.len(), 20 * 16);
        assert!(m.vertices.iter().all(|v| (v.coords.norm() - 2.0).abs() < 1e-12));
    }

    #[test]
    fn obj_roundtrip_and_missing_normals() {
        let dir = tempfile::tempdir().unwrap();
        let cube = Mesh::cuboid(Vector3::new(0.5, 0.5, 0.5));
        let p = dir.path().join("cube.obj");
        std::fs::write(&p, cube.to_obj_string()).unwrap();
        let loaded = load_obj(&p).unwrap();
        assert_eq!(loaded.triangles.len(), 12);
        assert_eq!(loaded.bounds(), cube.bounds());

        let q = dir.path().join("tri.obj");
        std::fs::write(&q, "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 -1\nf 1 2 3\nf 1 4 2\n").unwrap();
        let tri = load_obj(&q).unwrap();
        // vertex 0 and 1 are shared by a +z face and a -y face of equal area
        assert!((tri.normals[2] - Vector3::z()).norm() < 1e-12);
        assert!((tri.normals[0].norm() - 1.0).abs() < 1e-12);
        let expected = (Vector3::z() - Vector3::y()).normalize();
        assert!((tri.normals[0] - expected).norm() < 1e-12);
    }
}
