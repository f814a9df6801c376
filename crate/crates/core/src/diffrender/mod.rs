//! Photometric loss and its analytic gradient under the fixed-coverage
//! approximation: triangle ids per pixel are held constant, and gradients
//! flow through barycentric interpolation, projection, the rigid transform,
//! vertex normals, SH evaluation, bilinear texture weights and the linear
//! model. Saturated (clamped) pixel channels pass no gradient.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Matrix3;

use crate::camera::{rotation_derivatives, Camera};
use crate::error::{Error, Result};
use crate::fitting::FaceParams;
use crate::image::{Image, Mask};
use crate::mesh::{vertex_normals_backward, Vec3};
use crate::model::MorphableModel;
use crate::par;
use crate::raster::{footprint, interpolate_uv, screen_barycentrics, BAND_ROWS, EMPTY};
use crate::shading::{render_illuminated, sh_basis_jacobian, sh_basis_unit, Rendered, VIEW_FLIP};

/// A renderable scene: model, texture and per-face parameters.
#[derive(Debug, Clone)]
pub struct Scene<'a> {
    pub model: &'a MorphableModel,
    pub texture: Image,
    pub params: FaceParams,
}

impl Scene<'_> {
    pub fn render(&self) -> Result<Rendered> {
        render_illuminated(
            self.model,
            &self.params.coeffs,
            &self.params.pose,
            &self.params.camera,
            &self.texture,
            &self.params.lighting,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub shape: Vec<f64>,
    pub expr: Vec<f64>,
    /// Axis-angle rotation then translation.
    pub pose: [f64; 6],
    pub gamma: [[f64; 9]; 3],
    /// Same layout as the texture; `None` when not requested.
    pub texture: Option<Image>,
}

impl Gradients {
    pub fn zeros(k_s: usize, k_e: usize) -> Self {
        Gradients {
            shape: vec![0.0; k_s],
            expr: vec![0.0; k_e],
            pose: [0.0; 6],
            gamma: [[0.0; 9]; 3],
            texture: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.shape.iter().chain(&self.expr).chain(&self.pose).all(|v| v.is_finite())
            && self.gamma.iter().flatten().all(|v| v.is_finite())
            && self
                .texture
                .as_ref()
                .is_none_or(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// Mean squared error over masked pixels and all channels.
pub fn photometric_loss(rendered: &Image, target: &Image, mask: &Mask) -> Result<f64> {
    rendered.check_same_shape(target)?;
    mask.check_dims(rendered.width, rendered.height)?;
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let ch = rendered.channels;
    let mut sum = 0.0;
    for (i, &m) in mask.data.iter().enumerate() {
        if !m {
            continue;
        }
        for c in 0..ch {
            let d = rendered.data[i * ch + c] - target.data[i * ch + c];
            sum += d * d;
        }
    }
    Ok(sum / (count * ch) as f64)
}

/// Loss gradients collected at the vertices, before the geometric chain.
#[derive(Debug, Clone)]
pub struct VertexGrads {
    /// `∂L/∂(screen x, screen y, camera z)` per vertex.
    pub screen: Vec<[f64; 3]>,
    /// `∂L/∂` per-vertex RGB irradiance.
    pub irradiance: Vec<[f64; 3]>,
}

impl VertexGrads {
    pub fn zeros(n: usize) -> Self {
        VertexGrads {
            screen: vec![[0.0; 3]; n],
            irradiance: vec![[0.0; 3]; n],
        }
    }
}

/// Per-pixel contribution recorded during the parallel pass.
#[derive(Clone, Copy)]
struct PixelGrad {
    tri: u32,
    screen: [[f64; 3]; 3],
    irradiance: [[f64; 3]; 3],
    g_albedo: [f64; 3],
    texels: [usize; 4],
    weights: [f64; 4],
}

#[inline]
fn edge_grad(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> [[f64; 2]; 3] {
    // edge(a, b, p) = (bx − ax)(py − ay) − (by − ay)(px − ax)
    [
        [b[1] - p[1], p[0] - b[0]],
        [p[1] - a[1], -(p[0] - a[0])],
        [-(b[1] - a[1]), b[0] - a[0]],
    ]
}

/// Backpropagates `∂L/∂λ` (screen barycentrics at pixel center `p`) to the
/// screen positions of the triangle's vertices.
#[inline]
fn barycentric_backward(v: &[[f64; 3]; 3], p: [f64; 2], lambda: &[f64; 3], g_lambda: &[f64; 3]) -> [[f64; 2]; 3] {
    let xy = |k: usize| [v[k][0], v[k][1]];
    let area = crate::raster::edge(v[0][0], v[0][1], v[1][0], v[1][1], v[2][0], v[2][1]);
    let g_w = g_lambda.map(|g| g / area);
    let g_area = -(g_lambda[0] * lambda[0] + g_lambda[1] * lambda[1] + g_lambda[2] * lambda[2]) / area;
    let mut out = [[0.0; 2]; 3];
    let mut add = |k: usize, g: [f64; 2], s: f64| {
        out[k][0] += g[0] * s;
        out[k][1] += g[1] * s;
    };
    // w0 = edge(v1, v2, p), w1 = edge(v2, v0, p), w2 = edge(v0, v1, p)
    let e0 = edge_grad(xy(1), xy(2), p);
    add(1, e0[0], g_w[0]);
    add(2, e0[1], g_w[0]);
    let e1 = edge_grad(xy(2), xy(0), p);
    add(2, e1[0], g_w[1]);
    add(0, e1[1], g_w[1]);
    let e2 = edge_grad(xy(0), xy(1), p);
    add(0, e2[0], g_w[2]);
    add(1, e2[1], g_w[2]);
    // area = edge(v0, v1, v2)
    let ea = edge_grad(xy(0), xy(1), xy(2));
    add(0, ea[0], g_area);
    add(1, ea[1], g_area);
    add(2, ea[2], g_area);
    out
}

/// Photometric loss plus its gradient at the vertices (and optionally the texture).
///
/// `weight` scales the loss and all gradients.
pub fn photometric_backward(
    rendered: &Rendered,
    triangles: &[[u32; 3]],
    uv: &[[f64; 2]],
    texture: &Image,
    target: &Image,
    mask: &Mask,
    weight: f64,
    want_texture: bool,
) -> Result<(f64, VertexGrads, Option<Image>)> {
    let loss = photometric_loss(&rendered.image, target, mask)?;
    let g = &rendered.gbuffer;
    let (w, h) = (g.width, g.height);
    let scale = weight * 2.0 / (mask.count() * 3) as f64;
    let screen = &rendered.projection.screen;

    let bands = h.div_ceil(BAND_ROWS);
    let parts: Vec<Vec<(usize, PixelGrad)>> = par::map_indexed(bands, |band| {
        let y0 = band * BAND_ROWS;
        let y1 = (y0 + BAND_ROWS).min(h);
        let mut out = Vec::new();
        for y in y0..y1 {
            for x in 0..w {
                let i = y * w + x;
                let t = g.triangle[i];
                if t == EMPTY || !mask.data[i] {
                    continue;
                }
                let mut g_pre = [0.0; 3];
                let mut any = false;
                for c in 0..3 {
                    let pre = rendered.pre_clamp.data[i * 3 + c];
                    if (0.0..=1.0).contains(&pre) {
                        g_pre[c] = scale * (rendered.image.data[i * 3 + c] - target.data[i * 3 + c]);
                        any |= g_pre[c] != 0.0;
                    }
                }
                if !any {
                    continue;
                }
                let tri = &triangles[t as usize];
                let v = tri.map(|k| screen[k as usize]);
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let Some(lambda) = screen_barycentrics(&v, p[0], p[1]) else {
                    continue;
                };
                let z = [v[0][2], v[1][2], v[2][2]];
                let b = &g.bary[i];
                let [uu, vv] = interpolate_uv(uv, tri, b);
                let fp = footprint(uu, vv, texture.width, texture.height);

                let mut g_albedo = [0.0; 3];
                let mut g_b = [0.0; 3];
                let mut g_uv = [0.0; 2];
                let mut g_irr = [[0.0; 3]; 3];
                for c in 0..3 {
                    if g_pre[c] == 0.0 {
                        continue;
                    }
                    let a = rendered.albedo.data[i * 3 + c];
                    let e = rendered.irradiance.data[i * 3 + c];
                    g_albedo[c] = g_pre[c] * e;
                    let g_e = g_pre[c] * a;
                    let (du, dv) = fp.gradient(texture, c);
                    g_uv[0] += g_albedo[c] * du;
                    g_uv[1] += g_albedo[c] * dv;
                    for k in 0..3 {
                        let vi = tri[k] as usize;
                        g_irr[k][c] = g_e * b[k];
                        g_b[k] += g_e * rendered.vertex_irradiance[vi][c];
                    }
                }
                for k in 0..3 {
                    let t_uv = uv[tri[k] as usize];
                    g_b[k] += g_uv[0] * t_uv[0] + g_uv[1] * t_uv[1];
                }
                // b_k = q_k / Σq, q_k = λ_k / z_k
                let q = [lambda[0] / z[0], lambda[1] / z[1], lambda[2] / z[2]];
                let qs = q[0] + q[1] + q[2];
                let dot = g_b[0] * b[0] + g_b[1] * b[1] + g_b[2] * b[2];
                let g_q = g_b.map(|gb| (gb - dot) / qs);
                let g_lambda = [g_q[0] / z[0], g_q[1] / z[1], g_q[2] / z[2]];
                let g_xy = barycentric_backward(&v, p, &lambda, &g_lambda);
                let mut g_screen = [[0.0; 3]; 3];
                for k in 0..3 {
                    g_screen[k] = [g_xy[k][0], g_xy[k][1], -g_q[k] * lambda[k] / (z[k] * z[k])];
                }
                out.push((
                    i,
                    PixelGrad {
                        tri: t,
                        screen: g_screen,
                        irradiance: g_irr,
                        g_albedo,
                        texels: fp.texels,
                        weights: fp.weights,
                    },
                ));
            }
        }
        out
    });

    let n = screen.len();
    let mut vg = VertexGrads::zeros(n);
    let mut d_tex = want_texture.then(|| Image::new(texture.width, texture.height, texture.channels));
    for (_, pg) in parts.iter().flatten() {
        let tri = &triangles[pg.tri as usize];
        for k in 0..3 {
            let vi = tri[k] as usize;
            for j in 0..3 {
                vg.screen[vi][j] += pg.screen[k][j];
                vg.irradiance[vi][j] += pg.irradiance[k][j];
            }
        }
        if let Some(dt) = d_tex.as_mut() {
            for (&texel, &wt) in pg.texels.iter().zip(&pg.weights) {
                for c in 0..3 {
                    dt.data[texel * 3 + c] += pg.g_albedo[c] * wt;
                }
            }
        }
    }
    Ok((weight * loss, vg, d_tex))
}

/// Chains vertex-level gradients through projection, pose, normals, lighting
/// and the morphable model.
pub fn vertex_backward(
    model: &MorphableModel,
    params: &FaceParams,
    rendered: &Rendered,
    vg: &VertexGrads,
) -> Gradients {
    let cam: &Camera = &params.camera;
    let pose = &params.pose;
    let r = pose.rotation_matrix();
    let n = rendered.vertices.len();
    let mut grads = Gradients::zeros(model.k_shape(), model.k_expr());

    // dL/dR accumulated as Σ g · vᵀ.
    let mut g_rot = Matrix3::<f64>::zeros();
    let mut g_vertices = vec![Vec3::zeros(); n];
    let mut g_translation = Vec3::zeros();

    for i in 0..n {
        let [gx, gy, gz] = vg.screen[i];
        if gx == 0.0 && gy == 0.0 && gz == 0.0 {
            continue;
        }
        let p = rendered.projection.camera_points[i];
        let inv_z = 1.0 / p.z;
        let g_p = Vec3::new(
            gx * cam.focal * inv_z,
            gy * cam.focal * inv_z,
            gz - (gx * cam.focal * p.x + gy * cam.focal * p.y) * inv_z * inv_z,
        );
        g_translation += g_p;
        g_vertices[i] += r.transpose() * g_p;
        g_rot += g_p * rendered.vertices[i].transpose();
    }

    let gamma = &params.lighting.gamma;
    let mut g_normals = vec![Vec3::zeros(); n];
    for i in 0..n {
        let g_e = vg.irradiance[i];
        if g_e == [0.0; 3] {
            continue;
        }
        let nv = rendered.view_normals[i];
        let phi = sh_basis_unit(&nv);
        let jac = sh_basis_jacobian(&nv);
        let mut g_nv = Vec3::zeros();
        for c in 0..3 {
            if g_e[c] == 0.0 {
                continue;
            }
            for b in 0..9 {
                grads.gamma[c][b] += g_e[c] * phi[b];
                g_nv += jac[b] * (g_e[c] * gamma[c][b]);
            }
        }
        let g_ncam = Vec3::new(g_nv.x * VIEW_FLIP[0], g_nv.y * VIEW_FLIP[1], g_nv.z * VIEW_FLIP[2]);
        let nm = rendered.normals.normals[i];
        g_rot += g_ncam * nm.transpose();
        g_normals[i] = r.transpose() * g_ncam;
    }
    let g_from_normals = vertex_normals_backward(&rendered.vertices, &model.triangles, &g_normals);
    for (g, gn) in g_vertices.iter_mut().zip(&g_from_normals) {
        *g += gn;
    }

    let d_r = rotation_derivatives(&pose.rotation);
    for (k, d) in d_r.iter().enumerate() {
        grads.pose[k] = g_rot.component_mul(d).sum();
    }
    grads.pose[3] = g_translation.x;
    grads.pose[4] = g_translation.y;
    grads.pose[5] = g_translation.z;

    let (ds, de) = model.coeff_gradient(&g_vertices);
    grads.shape = ds;
    grads.expr = de;
    grads
}

/// Gradient of `photometric_loss(render(scene), target, mask)` w.r.t. every
/// continuous parameter, texture included.
pub fn backward(scene: &Scene<'_>, target: &Image, mask: &Mask) -> Result<(f64, Gradients)> {
    let rendered = scene.render()?;
    backward_rendered(scene, &rendered, target, mask, true)
}

pub fn backward_rendered(
    scene: &Scene<'_>,
    rendered: &Rendered,
    target: &Image,
    mask: &Mask,
    want_texture: bool,
) -> Result<(f64, Gradients)> {
    let uv = scene.model.uv_f64();
    let (loss, vg, d_tex) = photometric_backward(
        rendered,
        &scene.model.triangles,
        &uv,
        &scene.texture,
        target,
        mask,
        1.0,
        want_texture,
    )?;
    let mut grads = vertex_backward(scene.model, &scene.params, rendered, &vg);
    grads.texture = d_tex;
    Ok((loss, grads))
}

mod gradcheck;
pub use gradcheck::{
    gradcheck, toy_scene, Block, BlockReport, GradcheckOptions, GradcheckReport, Instability,
    ToyScene,
};

#[cfg(test)]
mod tests;
