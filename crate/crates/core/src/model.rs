//! Linear morphable face model: PCA construction and synthesis.
//!
//! Geometry is `mean + shape_basis · p_s + expr_basis · p_e`, with the bases
//! stored column-major in `f32` so the model container round-trips bit-exactly.

#[allow(unused_imports)]
use crate::float::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Vec3};

/// Role of a training mesh in [`build_from_samples`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Neutral,
    /// Expressive mesh paired with the neutral sample at this index.
    Expressive { neutral: usize },
}

/// PCA coefficients, dimensionless.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShapeCoeffs {
    pub shape: Vec<f64>,
    pub expr: Vec<f64>,
}

impl ShapeCoeffs {
    pub fn zeros(k_s: usize, k_e: usize) -> Self {
        ShapeCoeffs {
            shape: vec![0.0; k_s],
            expr: vec![0.0; k_e],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    pub num_vertices: usize,
    pub mean: Vec<f32>,
    /// `3·N_v × k_s`, column-major.
    pub shape_basis: Vec<f32>,
    /// `3·N_v × k_e`, column-major.
    pub expr_basis: Vec<f32>,
    pub shape_sigmas: Vec<f32>,
    pub expr_sigmas: Vec<f32>,
    pub triangles: Vec<[u32; 3]>,
    pub uv: Vec<[f32; 2]>,
    pub mouth_loop: Vec<u32>,
}

impl MorphableModel {
    pub fn k_shape(&self) -> usize {
        self.shape_sigmas.len()
    }

    pub fn k_expr(&self) -> usize {
        self.expr_sigmas.len()
    }

    pub fn shape_column(&self, j: usize) -> &[f32] {
        let n = 3 * self.num_vertices;
        &self.shape_basis[j * n..(j + 1) * n]
    }

    pub fn expr_column(&self, j: usize) -> &[f32] {
        let n = 3 * self.num_vertices;
        &self.expr_basis[j * n..(j + 1) * n]
    }

    /// Checks array lengths, index ranges and the mouth loop.
    pub fn validate(&self) -> Result<()> {
        let n3 = 3 * self.num_vertices;
        let check = |what: &'static str, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Dimension {
                    what,
                    expected,
                    got,
                })
            }
        };
        check("mean", n3, self.mean.len())?;
        check("shape basis", n3 * self.k_shape(), self.shape_basis.len())?;
        check("expression basis", n3 * self.k_expr(), self.expr_basis.len())?;
        check("uv", self.num_vertices, self.uv.len())?;
        if self.mouth_loop.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "mouth loop needs at least 3 vertices, got {}",
                self.mouth_loop.len()
            )));
        }
        if let Some(bad) = self
            .mouth_loop
            .iter()
            .find(|&&i| i as usize >= self.num_vertices)
        {
            return Err(Error::InvalidInput(format!(
                "mouth loop index {bad} out of range"
            )));
        }
        self.template().validate()
    }

    pub fn check_coeffs(&self, coeffs: &ShapeCoeffs) -> Result<()> {
        if coeffs.shape.len() != self.k_shape() {
            return Err(Error::Dimension {
                what: "shape coefficients",
                expected: self.k_shape(),
                got: coeffs.shape.len(),
            });
        }
        if coeffs.expr.len() != self.k_expr() {
            return Err(Error::Dimension {
                what: "expression coefficients",
                expected: self.k_expr(),
                got: coeffs.expr.len(),
            });
        }
        Ok(())
    }

    pub fn uv_f64(&self) -> Vec<[f64; 2]> {
        self.uv.iter().map(|t| [t[0] as f64, t[1] as f64]).collect()
    }

    /// The mean shape with the shared triangulation and UV map.
    pub fn template(&self) -> Mesh {
        Mesh {
            vertices: self.mean_vertices(),
            triangles: self.triangles.clone(),
            uv: self.uv_f64(),
        }
    }

    pub fn mean_vertices(&self) -> Vec<Vec3> {
        self.mean
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
            .collect()
    }

    /// `M + U_s·p_s + U_e·p_e` as a flat `3·N_v` vector.
    ///
    /// Zero coefficients are skipped, so zero input returns the mean bit-exactly.
    pub fn synthesize_flat(&self, coeffs: &ShapeCoeffs) -> Result<Vec<f64>> {
        self.check_coeffs(coeffs)?;
        let mut out: Vec<f64> = self.mean.iter().map(|&m| m as f64).collect();
        for (j, &p) in coeffs.shape.iter().enumerate() {
            if p != 0.0 {
                axpy(&mut out, p, self.shape_column(j));
            }
        }
        for (j, &p) in coeffs.expr.iter().enumerate() {
            if p != 0.0 {
                axpy(&mut out, p, self.expr_column(j));
            }
        }
        Ok(out)
    }

    pub fn synthesize_vertices(&self, coeffs: &ShapeCoeffs) -> Result<Vec<Vec3>> {
        let flat = self.synthesize_flat(coeffs)?;
        Ok(flat
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect())
    }

    pub fn synthesize(&self, coeffs: &ShapeCoeffs) -> Result<Mesh> {
        Ok(Mesh {
            vertices: self.synthesize_vertices(coeffs)?,
            triangles: self.triangles.clone(),
            uv: self.uv_f64(),
        })
    }

    /// Shape coefficients of a neutral mesh: `U_sᵀ (x − M)`.
    pub fn project_shape(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        if mesh.num_vertices() != self.num_vertices {
            return Err(Error::Dimension {
                what: "mesh vertices",
                expected: self.num_vertices,
                got: mesh.num_vertices(),
            });
        }
        let centered: Vec<f64> = mesh
            .flatten()
            .iter()
            .zip(&self.mean)
            .map(|(x, &m)| x - m as f64)
            .collect();
        Ok((0..self.k_shape())
            .map(|j| dot(self.shape_column(j), &centered))
            .collect())
    }

    /// Backpropagates a per-vertex gradient to `(d p_s, d p_e)`.
    pub(crate) fn coeff_gradient(&self, grad_vertices: &[Vec3]) -> (Vec<f64>, Vec<f64>) {
        let flat: Vec<f64> = grad_vertices
            .iter()
            .flat_map(|g| [g.x, g.y, g.z])
            .collect();
        let d_shape = (0..self.k_shape())
            .map(|j| dot(self.shape_column(j), &flat))
            .collect();
        let d_expr = (0..self.k_expr())
            .map(|j| dot(self.expr_column(j), &flat))
            .collect();
        (d_shape, d_expr)
    }
}

fn axpy(out: &mut [f64], a: f64, column: &[f32]) {
    for (o, &u) in out.iter_mut().zip(column) {
        *o += a * u as f64;
    }
}

fn dot(column: &[f32], x: &[f64]) -> f64 {
    column.iter().zip(x).map(|(&u, &v)| u as f64 * v).sum()
}

/// Truncated PCA basis of a data matrix.
struct Pca {
    columns: Vec<Vec<f64>>,
    singular_values: Vec<f64>,
}

/// Numerical rank and the leading `k` left singular vectors of `data`.
fn pca(data: DMatrix<f64>, k: usize, basis: &'static str) -> Result<Pca> {
    if k == 0 {
        return Ok(Pca {
            columns: Vec::new(),
            singular_values: Vec::new(),
        });
    }
    let (rows, cols) = data.shape();
    let svd = nalgebra::SVD::new(data, true, false);
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let tol = s_max * rows.max(cols) as f64 * f64::EPSILON;
    let rank = if s_max > 0.0 {
        s.iter().filter(|&&v| v > tol).count()
    } else {
        0
    };
    if k > rank {
        return Err(Error::Rank {
            basis,
            requested: k,
            rank,
        });
    }
    let u = svd.u.expect("left singular vectors requested");
    let columns = (0..k)
        .map(|j| {
            let mut col: Vec<f64> = u.column(j).iter().copied().collect();
            // Sign convention: the first entry of largest magnitude is positive.
            let mut best = 0;
            for (i, v) in col.iter().enumerate() {
                if v.abs() > col[best].abs() {
                    best = i;
                }
            }
            if col[best] < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
            col
        })
        .collect();
    Ok(Pca {
        columns,
        singular_values: s.iter().take(k).copied().collect(),
    })
}

/// Builds a morphable model from meshes in dense correspondence.
///
/// The shape space is the PCA of the centered neutral meshes; the expression
/// space is the PCA of the (uncentered) expressive-minus-neutral displacements.
/// Shape sigmas are `s / sqrt(n_neutral − 1)`, expression sigmas
/// `s / sqrt(n_pairs)`.
pub fn build_from_samples(
    samples: &[Mesh],
    kinds: &[SampleKind],
    k_shape: usize,
    k_expr: usize,
    mouth_loop: Vec<u32>,
) -> Result<MorphableModel> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    if kinds.len() != samples.len() {
        return Err(Error::Dimension {
            what: "sample labels",
            expected: samples.len(),
            got: kinds.len(),
        });
    }
    let first = &samples[0];
    first.validate()?;
    for (i, s) in samples.iter().enumerate().skip(1) {
        if s.num_vertices() != first.num_vertices() {
            return Err(Error::Topology(format!(
                "sample {i} has {} vertices, sample 0 has {}",
                s.num_vertices(),
                first.num_vertices()
            )));
        }
        if s.triangles != first.triangles {
            return Err(Error::Topology(format!(
                "sample {i} triangulation differs from sample 0"
            )));
        }
        if s.uv != first.uv {
            return Err(Error::Topology(format!("sample {i} uv differs from sample 0")));
        }
    }

    let neutral: Vec<usize> = kinds
        .iter()
        .enumerate()
        .filter(|(_, k)| matches!(k, SampleKind::Neutral))
        .map(|(i, _)| i)
        .collect();
    if neutral.is_empty() {
        return Err(Error::InvalidInput("no neutral samples".into()));
    }
    let mut pairs = Vec::new();
    for (i, k) in kinds.iter().enumerate() {
        if let SampleKind::Expressive { neutral: n } = *k {
            if n >= samples.len() || kinds[n] != SampleKind::Neutral {
                return Err(Error::InvalidInput(format!(
                    "expressive sample {i} is paired with {n}, which is not a neutral sample"
                )));
            }
            pairs.push((i, n));
        }
    }

    let n3 = 3 * first.num_vertices();
    let flats: Vec<Vec<f64>> = samples.iter().map(|s| s.flatten()).collect();

    let mut mean = vec![0.0f64; n3];
    for &i in &neutral {
        for (m, x) in mean.iter_mut().zip(&flats[i]) {
            *m += x;
        }
    }
    let inv = 1.0 / neutral.len() as f64;
    mean.iter_mut().for_each(|m| *m *= inv);

    let centered = DMatrix::from_fn(n3, neutral.len(), |r, c| flats[neutral[c]][r] - mean[r]);
    let shape = pca(centered, k_shape, "shape")?;

    let displacements = DMatrix::from_fn(n3, pairs.len(), |r, c| {
        let (e, n) = pairs[c];
        flats[e][r] - flats[n][r]
    });
    let expr = pca(displacements, k_expr, "expression")?;

    let shape_scale = 1.0 / ((neutral.len() - 1).max(1) as f64).sqrt();
    let expr_scale = 1.0 / (pairs.len().max(1) as f64).sqrt();

    let to_f32 = |cols: &[Vec<f64>]| -> Vec<f32> {
        cols.iter().flat_map(|c| c.iter().map(|&v| v as f32)).collect()
    };
    let model = MorphableModel {
        num_vertices: first.num_vertices(),
        mean: mean.iter().map(|&v| v as f32).collect(),
        shape_basis: to_f32(&shape.columns),
        expr_basis: to_f32(&expr.columns),
        shape_sigmas: shape
            .singular_values
            .iter()
            .map(|s| (s * shape_scale) as f32)
            .collect(),
        expr_sigmas: expr
            .singular_values
            .iter()
            .map(|s| (s * expr_scale) as f32)
            .collect(),
        triangles: first.triangles.clone(),
        uv: first.uv.iter().map(|t| [t[0] as f32, t[1] as f32]).collect(),
        mouth_loop,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_mesh(offsets: &[f64; 12]) -> Mesh {
        let vertices = offsets
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect();
        Mesh {
            vertices,
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            uv: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        }
    }

    const BASE: [f64; 12] = [0., 0., 0., 1., 0., 0., 1., 1., 0., 0., 1., 0.];

    #[test]
    fn identical_samples_have_rank_zero() {
        let m = quad_mesh(&BASE);
        let kinds = [SampleKind::Neutral; 2];
        let err = build_from_samples(&[m.clone(), m.clone()], &kinds, 1, 0, vec![0, 1, 2]);
        assert!(matches!(err, Err(Error::Rank { rank: 0, .. })));
        let model = build_from_samples(&[m.clone(), m.clone()], &kinds, 0, 0, vec![0, 1, 2]).unwrap();
        let mean: Vec<f64> = model.mean.iter().map(|&v| v as f64).collect();
        assert_eq!(mean, m.flatten());
    }

    #[test]
    fn mismatched_topology_is_rejected() {
        let a = quad_mesh(&BASE);
        let mut b = a.clone();
        b.triangles[1] = [0, 3, 2];
        let kinds = [SampleKind::Neutral; 2];
        assert!(matches!(
            build_from_samples(&[a, b], &kinds, 1, 0, vec![0, 1, 2]),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn single_component_is_parallel_to_difference() {
        let a = quad_mesh(&BASE);
        let mut off = BASE;
        off[2] += 0.5;
        off[8] -= 0.25;
        let b = quad_mesh(&off);
        let kinds = [SampleKind::Neutral; 2];
        let model = build_from_samples(&[a.clone(), b.clone()], &kinds, 1, 0, vec![0, 1, 2]).unwrap();
        // Oracle: the covariance of two samples is rank one with eigenvector (b − a)/|b − a|.
        let diff: Vec<f64> = b.flatten().iter().zip(a.flatten()).map(|(x, y)| x - y).collect();
        let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let col = model.shape_column(0);
        let unit = col.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((unit - 1.0).abs() < 1e-6);
        let cos = col.iter().zip(&diff).map(|(&u, d)| u as f64 * d).sum::<f64>() / norm;
        assert!((cos.abs() - 1.0).abs() < 1e-6);
        // Largest entry (index 2, +0.5/|d|) is positive.
        assert!(col[2] > 0.0);
        // sigma = |d| / sqrt(2) / sqrt(1)
        assert!((model.shape_sigmas[0] as f64 - norm / 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn expression_pairing_is_validated() {
        let a = quad_mesh(&BASE);
        let kinds = [SampleKind::Neutral, SampleKind::Expressive { neutral: 1 }];
        assert!(build_from_samples(&[a.clone(), a], &kinds, 0, 0, vec![0, 1, 2]).is_err());
    }

    #[test]
    fn coefficient_length_mismatch_is_an_error() {
        let a = quad_mesh(&BASE);
        let mut off = BASE;
        off[5] = 0.3;
        let model = build_from_samples(
            &[a, quad_mesh(&off)],
            &[SampleKind::Neutral; 2],
            1,
            0,
            vec![0, 1, 2],
        )
        .unwrap();
        let bad = ShapeCoeffs::zeros(2, 0);
        assert!(matches!(model.synthesize(&bad), Err(Error::Dimension { .. })));
    }
}
