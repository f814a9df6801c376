//! Triangle meshes with a per-vertex UV parametrization.

#[allow(unused_imports)]
use crate::float::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Vertices, counter-clockwise triangles and per-vertex UV coordinates in `[0,1]²`
/// (v = 0 at the bottom of the texture image).
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub uv: Vec<[f64; 2]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>, uv: Vec<[f64; 2]>) -> Result<Self> {
        let mesh = Mesh {
            vertices,
            triangles,
            uv,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.uv.len() != n {
            return Err(Error::InvalidMesh(format!(
                "{} uv coordinates for {} vertices",
                self.uv.len(),
                n
            )));
        }
        for (f, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as usize >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {f} references a vertex >= {n}"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!(
                    "triangle {f} repeats a vertex index"
                )));
            }
        }
        for (i, uv) in self.uv.iter().enumerate() {
            if !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1]) {
                return Err(Error::InvalidMesh(format!(
                    "uv of vertex {i} outside [0,1]"
                )));
            }
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        Ok(())
    }

    /// Row-major flattening `[x0, y0, z0, x1, ...]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }
}

/// Per-vertex normals plus the vertices that only touch zero-area faces.
#[derive(Debug, Clone)]
pub struct VertexNormals {
    pub normals: Vec<Vec3>,
    /// Vertices that received the `(0,0,1)` fallback.
    pub degenerate: Vec<u32>,
}

impl VertexNormals {
    pub fn has_degenerate(&self) -> bool {
        !self.degenerate.is_empty()
    }
}

pub const FALLBACK_NORMAL: [f64; 3] = [0.0, 0.0, 1.0];

/// Unnormalized face normal; its length is twice the triangle area.
#[inline]
pub fn face_cross(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    (b - a).cross(&(c - a))
}

/// Area-weighted vertex normals: sum of incident face cross products, normalized.
pub fn vertex_normals(vertices: &[Vec3], triangles: &[[u32; 3]]) -> VertexNormals {
    let sums = normal_sums(vertices, triangles);
    let mut degenerate = Vec::new();
    let normals = sums
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let len = m.norm();
            if len > 0.0 && len.is_finite() {
                m / len
            } else {
                degenerate.push(i as u32);
                Vec3::from(FALLBACK_NORMAL)
            }
        })
        .collect();
    VertexNormals {
        normals,
        degenerate,
    }
}

pub(crate) fn normal_sums(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
    let mut sums = vec![Vec3::zeros(); vertices.len()];
    for tri in triangles {
        let [a, b, c] = tri.map(|i| i as usize);
        let n = face_cross(&vertices[a], &vertices[b], &vertices[c]);
        sums[a] += n;
        sums[b] += n;
        sums[c] += n;
    }
    sums
}

/// Backpropagates a gradient on unit vertex normals to vertex positions.
///
/// Vertices that fell back to the constant normal contribute nothing.
pub(crate) fn vertex_normals_backward(
    vertices: &[Vec3],
    triangles: &[[u32; 3]],
    grad_normals: &[Vec3],
) -> Vec<Vec3> {
    let sums = normal_sums(vertices, triangles);
    let grad_sums: Vec<Vec3> = sums
        .iter()
        .zip(grad_normals)
        .map(|(m, g)| {
            let len = m.norm();
            if len > 0.0 && len.is_finite() {
                let n = m / len;
                (g - n * n.dot(g)) / len
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    let mut grad_v = vec![Vec3::zeros(); vertices.len()];
    for tri in triangles {
        let [ia, ib, ic] = tri.map(|i| i as usize);
        let gc = grad_sums[ia] + grad_sums[ib] + grad_sums[ic];
        let e1 = vertices[ib] - vertices[ia];
        let e2 = vertices[ic] - vertices[ia];
        // n = e1 x e2
        let g_e1 = e2.cross(&gc);
        let g_e2 = gc.cross(&e1);
        grad_v[ib] += g_e1;
        grad_v[ic] += g_e2;
        grad_v[ia] -= g_e1 + g_e2;
    }
    grad_v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn planar_triangle_normals_point_up() {
        let verts = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)];
        let n = vertex_normals(&verts, &[[0, 1, 2]]);
        assert!(!n.has_degenerate());
        for normal in &n.normals {
            assert_eq!(*normal, v(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn cube_corner_fan_matches_hand_sum() {
        // Three unit faces meeting at the origin corner with outward normals -x, -y, -z.
        // Each face is split into two triangles, both incident to the corner in one case.
        let verts = [
            v(0.0, 0.0, 0.0),
            v(1.0, 0.0, 0.0),
            v(0.0, 1.0, 0.0),
            v(0.0, 0.0, 1.0),
            v(1.0, 1.0, 0.0),
            v(0.0, 1.0, 1.0),
            v(1.0, 0.0, 1.0),
        ];
        let tris = [
            // z = 0 face, normal -z
            [0, 2, 4],
            [0, 4, 1],
            // x = 0 face, normal -x
            [0, 3, 5],
            [0, 5, 2],
            // y = 0 face, normal -y
            [0, 1, 6],
            [0, 6, 3],
        ];
        let n = vertex_normals(&verts, &tris);
        // Hand sum at the corner: each face contributes two half-area triangles,
        // so the weighted sum is (-1,-1,-1) up to scale.
        let expected = v(-1.0, -1.0, -1.0) / 3f64.sqrt();
        assert!((n.normals[0] - expected).norm() < 1e-12);
    }

    #[test]
    fn zero_area_falls_back() {
        let verts = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(2.0, 0.0, 0.0)];
        let n = vertex_normals(&verts, &[[0, 1, 2]]);
        assert_eq!(n.degenerate, vec![0, 1, 2]);
        assert_eq!(n.normals[1], Vec3::from(FALLBACK_NORMAL));
    }

    #[test]
    fn validation_catches_bad_indices_and_uv() {
        let verts = vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)];
        let uv = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(Mesh::new(verts.clone(), vec![[0, 1, 3]], uv.clone()).is_err());
        assert!(Mesh::new(verts.clone(), vec![[0, 1, 1]], uv.clone()).is_err());
        let mut bad_uv = uv.clone();
        bad_uv[2][1] = 1.5;
        assert!(Mesh::new(verts.clone(), vec![[0, 1, 2]], bad_uv).is_err());
        assert!(Mesh::new(verts, vec![[0, 1, 2]], uv).is_ok());
    }

    #[test]
    fn normal_backward_matches_finite_differences() {
        let verts = vec![
            v(0.0, 0.0, 0.1),
            v(1.0, 0.1, 0.0),
            v(0.2, 1.0, 0.3),
            v(1.1, 1.2, -0.2),
        ];
        let tris = [[0u32, 1, 2], [1, 3, 2]];
        let weights = [v(0.3, -0.2, 0.5), v(-0.1, 0.4, 0.2), v(0.7, 0.1, -0.3), v(0.2, 0.2, 0.2)];
        let objective = |vs: &[Vec3]| -> f64 {
            let n = vertex_normals(vs, &tris);
            n.normals.iter().zip(&weights).map(|(a, b)| a.dot(b)).sum()
        };
        let grad = vertex_normals_backward(&verts, &tris, &weights);
        let h = 1e-6;
        for i in 0..verts.len() {
            for k in 0..3 {
                let mut p = verts.clone();
                p[i][k] += h;
                let mut m = verts.clone();
                m[i][k] -= h;
                let fd = (objective(&p) - objective(&m)) / (2.0 * h);
                assert!((fd - grad[i][k]).abs() < 1e-7, "v{i}[{k}]: {fd} vs {}", grad[i][k]);
            }
        }
    }
}
