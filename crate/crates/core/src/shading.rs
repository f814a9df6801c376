//! Nine-coefficient real spherical-harmonics lighting and the two-pass
//! (albedo × illumination) render.
//!
//! Lighting is evaluated on normals in the view frame: x right, y up, z toward
//! the camera. A camera-space normal `(x, y, z)` maps to `(x, −y, −z)`, so a
//! face seen frontally has view-frame normals near `+z`.

#[allow(unused_imports)]
use crate::float::Float;
use alloc::vec::Vec;

use nalgebra::Matrix3;

use crate::camera::{project, Camera, Projection, RigidPose};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::mesh::{vertex_normals, Vec3, VertexNormals};
use crate::model::{MorphableModel, ShapeCoeffs};
use crate::raster::{footprint, interpolate_uv, rasterize, GBuffer, RasterOptions, EMPTY};

pub const SH_C0: f64 = 0.28209479177387814;
pub const SH_C1: f64 = 0.4886025119029199;
pub const SH_C2: f64 = 1.0925484305920792;
pub const SH_C3: f64 = 0.31539156525252005;
pub const SH_C4: f64 = 0.5462742152960396;

/// Per-channel SH coefficients, one row of 9 per R, G, B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShLighting {
    pub gamma: [[f64; 9]; 3],
}

impl Default for ShLighting {
    fn default() -> Self {
        Self::constant(1.0)
    }
}

impl ShLighting {
    pub fn zero() -> Self {
        ShLighting { gamma: [[0.0; 9]; 3] }
    }

    /// DC-only lighting giving irradiance `level` for every normal.
    pub fn constant(level: f64) -> Self {
        let mut gamma = [[0.0; 9]; 3];
        for row in &mut gamma {
            row[0] = level / SH_C0;
        }
        ShLighting { gamma }
    }

    /// Ambient level plus a directional lobe toward `dir` (view frame), same for all channels.
    pub fn directional(ambient: f64, strength: f64, dir: Vec3) -> Self {
        let d = dir.normalize();
        let (phi, _) = sh_basis(&d);
        let mut gamma = [[0.0; 9]; 3];
        for row in &mut gamma {
            row[0] = ambient / SH_C0;
            // Band-1 lobe: irradiance ambient + strength·(n · d).
            row[1] = strength * phi[1] / (SH_C1 * SH_C1);
            row[2] = strength * phi[2] / (SH_C1 * SH_C1);
            row[3] = strength * phi[3] / (SH_C1 * SH_C1);
        }
        ShLighting { gamma }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        out.gamma.iter_mut().flatten().for_each(|g| *g *= s);
        out
    }

    pub fn add(&self, other: &ShLighting) -> Self {
        let mut out = *self;
        for (a, b) in out.gamma.iter_mut().flatten().zip(other.gamma.iter().flatten()) {
            *a += b;
        }
        out
    }

    /// Left-right mirror: negates the coefficients odd in x.
    pub fn mirrored_x(&self) -> Self {
        let mut out = *self;
        for row in &mut out.gamma {
            for b in [3, 4, 7] {
                row[b] = -row[b];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.gamma.iter().flatten().all(|g| g.is_finite())
    }
}

/// The nine real SH basis values at `n`. Non-unit input is normalized and the
/// second value reports that it happened.
pub fn sh_basis(n: &Vec3) -> ([f64; 9], bool) {
    let len = n.norm();
    let renormalized = (len - 1.0).abs() > 1e-6;
    let n = if renormalized && len > 0.0 { n / len } else { *n };
    (sh_basis_unit(&n), renormalized)
}

#[inline]
pub fn sh_basis_unit(n: &Vec3) -> [f64; 9] {
    let (x, y, z) = (n.x, n.y, n.z);
    [
        SH_C0,
        SH_C1 * y,
        SH_C1 * z,
        SH_C1 * x,
        SH_C2 * x * y,
        SH_C2 * y * z,
        SH_C3 * (3.0 * z * z - 1.0),
        SH_C2 * x * z,
        SH_C4 * (x * x - y * y),
    ]
}

/// `∂Φ_b/∂n` for each basis function, treating `n` as a free 3-vector.
#[inline]
pub fn sh_basis_jacobian(n: &Vec3) -> [Vec3; 9] {
    let (x, y, z) = (n.x, n.y, n.z);
    [
        Vec3::zeros(),
        Vec3::new(0.0, SH_C1, 0.0),
        Vec3::new(0.0, 0.0, SH_C1),
        Vec3::new(SH_C1, 0.0, 0.0),
        Vec3::new(SH_C2 * y, SH_C2 * x, 0.0),
        Vec3::new(0.0, SH_C2 * z, SH_C2 * y),
        Vec3::new(0.0, 0.0, 6.0 * SH_C3 * z),
        Vec3::new(SH_C2 * z, 0.0, SH_C2 * x),
        Vec3::new(2.0 * SH_C4 * x, -2.0 * SH_C4 * y, 0.0),
    ]
}

/// Per-vertex RGB irradiance `Σ_b γ[c][b]·Φ_b(n_i)`, unclamped.
pub fn illuminate(normals: &[Vec3], lighting: &ShLighting) -> Vec<[f64; 3]> {
    normals
        .iter()
        .map(|n| {
            let phi = sh_basis_unit(n);
            let mut out = [0.0; 3];
            for (c, o) in out.iter_mut().enumerate() {
                *o = lighting.gamma[c]
                    .iter()
                    .zip(&phi)
                    .map(|(g, p)| g * p)
                    .sum();
            }
            out
        })
        .collect()
}

/// Camera-space to view-frame flip.
pub const VIEW_FLIP: [f64; 3] = [1.0, -1.0, -1.0];

#[inline]
pub fn view_normal(rotation: &Matrix3<f64>, n: &Vec3) -> Vec3 {
    let c = rotation * n;
    Vec3::new(c.x * VIEW_FLIP[0], c.y * VIEW_FLIP[1], c.z * VIEW_FLIP[2])
}

/// Everything produced by one forward render, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Rendered {
    /// `I_face`: clamped product, zero outside coverage.
    pub image: Image,
    pub mask: Mask,
    pub albedo: Image,
    pub irradiance: Image,
    /// Product before clamping.
    pub pre_clamp: Image,
    pub gbuffer: GBuffer,
    /// Model-space vertices.
    pub vertices: Vec<Vec3>,
    /// Model-space normals.
    pub normals: VertexNormals,
    /// View-frame normals used for lighting.
    pub view_normals: Vec<Vec3>,
    pub projection: Projection,
    pub vertex_irradiance: Vec<[f64; 3]>,
}

/// Renders an explicit mesh: one rasterization shared by the albedo and
/// illumination passes, multiplied per pixel and clamped to `[0, 1]`.
pub fn render_mesh(
    vertices: Vec<Vec3>,
    triangles: &[[u32; 3]],
    uv: &[[f64; 2]],
    pose: &RigidPose,
    cam: &Camera,
    texture: &Image,
    lighting: &ShLighting,
) -> Result<Rendered> {
    if texture.channels != 3 {
        return Err(Error::Dimension {
            what: "texture channels",
            expected: 3,
            got: texture.channels,
        });
    }
    if uv.len() != vertices.len() {
        return Err(Error::Dimension {
            what: "uv coordinates",
            expected: vertices.len(),
            got: uv.len(),
        });
    }
    cam.validate()?;
    let normals = vertex_normals(&vertices, triangles);
    let r = pose.rotation_matrix();
    let view_normals: Vec<Vec3> = normals.normals.iter().map(|n| view_normal(&r, n)).collect();
    let vertex_irradiance = illuminate(&view_normals, lighting);
    let projection = project(&vertices, pose, cam);
    let gbuffer = rasterize(&projection.screen, triangles, cam, &RasterOptions::default());

    let (w, h) = (cam.width, cam.height);
    let mut albedo = Image::new(w, h, 3);
    let mut irradiance = Image::new(w, h, 3);
    let mut pre_clamp = Image::new(w, h, 3);
    let mut image = Image::new(w, h, 3);
    for i in 0..w * h {
        let t = gbuffer.triangle[i];
        if t == EMPTY {
            continue;
        }
        let tri = &triangles[t as usize];
        let b = &gbuffer.bary[i];
        let [u, v] = interpolate_uv(uv, tri, b);
        let fp = footprint(u, v, texture.width, texture.height);
        let [e0, e1, e2] = tri.map(|k| vertex_irradiance[k as usize]);
        for c in 0..3 {
            let a = fp.sample(texture, c);
            let e = b[0] * e0[c] + b[1] * e1[c] + b[2] * e2[c];
            let p = a * e;
            albedo.data[i * 3 + c] = a;
            irradiance.data[i * 3 + c] = e;
            pre_clamp.data[i * 3 + c] = p;
            image.data[i * 3 + c] = p.clamp(0.0, 1.0);
        }
    }
    Ok(Rendered {
        image,
        mask: gbuffer.mask(),
        albedo,
        irradiance,
        pre_clamp,
        gbuffer,
        vertices,
        normals,
        view_normals,
        projection,
        vertex_irradiance,
    })
}

/// `I_face = R(S, texture) · R(S, C(n|γ))` for a model instance.
pub fn render_illuminated(
    model: &MorphableModel,
    coeffs: &ShapeCoeffs,
    pose: &RigidPose,
    cam: &Camera,
    texture: &Image,
    lighting: &ShLighting,
) -> Result<Rendered> {
    let vertices = model.synthesize_vertices(coeffs)?;
    render_mesh(
        vertices,
        &model.triangles,
        &model.uv_f64(),
        pose,
        cam,
        texture,
        lighting,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_at_plus_z() {
        let (phi, renorm) = sh_basis(&Vec3::new(0.0, 0.0, 1.0));
        assert!(!renorm);
        let expected = [0.282095, 0.0, 0.488603, 0.0, 0.0, 0.0, 0.630784, 0.0, 0.0];
        for (a, b) in phi.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn parity_under_negation() {
        let n = Vec3::new(0.36, -0.48, 0.8);
        let (a, _) = sh_basis(&n);
        let (b, _) = sh_basis(&-n);
        for k in 0..9 {
            if [1, 2, 3].contains(&k) {
                assert_eq!(a[k], -b[k]);
            } else {
                assert_eq!(a[k], b[k]);
            }
        }
        assert_eq!(a[0], SH_C0);
    }

    #[test]
    fn non_unit_input_is_normalized() {
        let (phi, renorm) = sh_basis(&Vec3::new(0.0, 0.0, 2.0));
        assert!(renorm);
        assert!((phi[2] - SH_C1).abs() < 1e-12);
    }

    #[test]
    fn constant_light_gives_unit_irradiance() {
        let normals = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, -0.6, 0.8)];
        let e = illuminate(&normals, &ShLighting::constant(1.0));
        for v in e.iter().flatten() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn directional_light_matches_cosine() {
        let l = ShLighting::directional(0.2, 0.7, Vec3::new(0.0, 0.0, 1.0));
        let n = Vec3::new(0.6, 0.0, 0.8);
        let e = illuminate(&[n], &l)[0];
        assert!((e[0] - (0.2 + 0.7 * 0.8)).abs() < 1e-12);
    }

    #[test]
    fn basis_jacobian_matches_finite_differences() {
        let n = Vec3::new(0.2, -0.5, 0.7);
        let jac = sh_basis_jacobian(&n);
        let h = 1e-6;
        for k in 0..3 {
            let mut p = n;
            p[k] += h;
            let mut m = n;
            m[k] -= h;
            let (fp, fm) = (sh_basis_unit(&p), sh_basis_unit(&m));
            for b in 0..9 {
                let fd = (fp[b] - fm[b]) / (2.0 * h);
                assert!((fd - jac[b][k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn mirrored_lighting_mirrors_irradiance() {
        let mut l = ShLighting::zero();
        for (b, g) in l.gamma[0].iter_mut().enumerate() {
            *g = 0.1 * (b as f64 + 1.0);
        }
        let n = Vec3::new(0.3, 0.4, (1.0f64 - 0.25).sqrt());
        let m = Vec3::new(-n.x, n.y, n.z);
        let a = illuminate(&[n], &l)[0][0];
        let b = illuminate(&[m], &l.mirrored_x())[0][0];
        assert!((a - b).abs() < 1e-15);
    }
}
