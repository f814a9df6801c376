//! Full UV texture recovery from posed views by direct texel optimization,
//! plus harmonic inpainting of unseen texels and relighting.
//!
//! With geometry and lighting fixed the pre-clamp render is linear in the
//! texels, so the photometric data term is a linear least-squares problem
//! whose gradient is exactly the renderer's texture gradient. The smoothed
//! total-variation prior is handled by iteratively reweighted least squares
//! (a majorize-minimize scheme), each quadratic being reduced by
//! Jacobi-preconditioned conjugate gradients started at the current texture.
//! The objective therefore never increases between outer iterations.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::float::Float;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::fitting::FaceParams;
use crate::image::{Image, Mask};
use crate::mesh::{vertex_normals, Vec3};
use crate::model::{MorphableModel, ShapeCoeffs};
use crate::par;
use crate::raster::{footprint, interpolate_uv, rasterize, RasterOptions, EMPTY};
use crate::shading::{render_illuminated, ShLighting};

#[derive(Debug, Clone, PartialEq)]
pub struct RecoverOptions {
    /// Reweighting (outer) iterations.
    pub iterations: usize,
    /// Conjugate-gradient steps per outer iteration.
    pub cg_iterations: usize,
    /// Weight of the mean smoothed TV over texels.
    pub lambda_tv: f64,
    pub tv_epsilon: f64,
    /// Minimum `dot(normal, direction to camera)` for a pixel to count.
    pub facing_threshold: f64,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        RecoverOptions {
            iterations: 8,
            cg_iterations: 60,
            lambda_tv: 1e-4,
            tv_epsilon: 1e-2,
            facing_threshold: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecoveredTexture {
    pub texture: Image,
    /// Single channel in [0, 1]; 0 marks texels no view observed.
    pub validity: Image,
    /// Objective before the first and after every outer iteration.
    pub objective_trace: Vec<f64>,
}

impl RecoveredTexture {
    pub fn valid_mask(&self) -> Mask {
        Mask {
            width: self.validity.width,
            height: self.validity.height,
            data: self.validity.data.iter().map(|&v| v > 0.0).collect(),
        }
    }
}

/// One covered, front-facing pixel of one view.
#[derive(Debug, Clone, Copy)]
struct Sample {
    texels: [u32; 4],
    weights: [f64; 4],
    irradiance: [f64; 3],
    target: [f64; 3],
}

struct View {
    samples: Vec<Sample>,
    /// `1 / (3·covered pixels)`, the photometric loss normalization.
    scale: f64,
}

/// Per-pixel cosine between the interpolated camera-space normal and the
/// direction to the camera, for every covered pixel (NaN elsewhere).
pub fn facing_map(model: &MorphableModel, params: &FaceParams) -> Result<Image> {
    let lit = render_illuminated(
        model,
        &params.coeffs,
        &params.pose,
        &params.camera,
        &Image::filled(2, 2, 3, 1.0),
        &ShLighting::constant(1.0),
    )?;
    let r = params.pose.rotation_matrix();
    let per_vertex: Vec<f64> = lit
        .normals
        .normals
        .iter()
        .zip(&lit.projection.camera_points)
        .map(|(n, p)| {
            let nc = r * n;
            let to_cam = -p / p.norm();
            nc.dot(&to_cam)
        })
        .collect();
    let g = &lit.gbuffer;
    let data = (0..g.triangle.len())
        .map(|i| {
            let t = g.triangle[i];
            if t == EMPTY {
                return f64::NAN;
            }
            let tri = &model.triangles[t as usize];
            let b = &g.bary[i];
            (0..3).map(|k| b[k] * per_vertex[tri[k] as usize]).sum()
        })
        .collect();
    Image::from_data(g.width, g.height, 1, data)
}

fn build_view(
    model: &MorphableModel,
    uv: &[[f64; 2]],
    image: &Image,
    params: &FaceParams,
    size: usize,
    opts: &RecoverOptions,
) -> Result<View> {
    let cam = &params.camera;
    if image.width != cam.width || image.height != cam.height || image.channels != 3 {
        return Err(Error::Dimension {
            what: "view image pixels",
            expected: cam.width * cam.height,
            got: image.width * image.height,
        });
    }
    let rendered = render_illuminated(
        model,
        &params.coeffs,
        &params.pose,
        cam,
        &Image::filled(2, 2, 3, 1.0),
        &params.lighting,
    )?;
    let facing = facing_map(model, params)?;
    let g = &rendered.gbuffer;
    let covered = rendered.mask.count();
    let mut samples = Vec::new();
    for i in 0..g.triangle.len() {
        let t = g.triangle[i];
        if t == EMPTY || !(facing.data[i] > opts.facing_threshold) {
            continue;
        }
        let [u, v] = interpolate_uv(uv, &model.triangles[t as usize], &g.bary[i]);
        let fp = footprint(u, v, size, size);
        samples.push(Sample {
            texels: fp.texels.map(|k| k as u32),
            weights: fp.weights,
            irradiance: core::array::from_fn(|c| rendered.irradiance.data[i * 3 + c]),
            target: core::array::from_fn(|c| image.data[i * 3 + c]),
        });
    }
    Ok(View {
        samples,
        scale: if covered > 0 { 1.0 / (3 * covered) as f64 } else { 0.0 },
    })
}

/// Observations of a pixel channel usable by the linear model: the target
/// is strictly inside the display range (a clamped target says nothing
/// exact about the pre-clamp value).
#[inline]
fn usable(target: f64) -> bool {
    target > 0.0 && target < 1.0
}

/// Accumulated footprint weight per texel from front-facing pixels of each
/// view, `min(1, Σ weights)`.
fn validity_of(views: &[View], size: usize) -> Image {
    let mut acc = vec![0.0; size * size];
    for v in views {
        for s in &v.samples {
            for (t, w) in s.texels.iter().zip(&s.weights) {
                acc[*t as usize] += w;
            }
        }
    }
    Image::from_data(size, size, 1, acc.into_iter().map(|a: f64| a.min(1.0)).collect()).expect("sized")
}

struct Channel<'a> {
    views: &'a [View],
    c: usize,
    size: usize,
    /// λ / texel count.
    tv_scale: f64,
    tv_epsilon: f64,
}

impl Channel<'_> {
    fn data_loss(&self, x: &[f64]) -> f64 {
        let c = self.c;
        let mut sum = 0.0;
        for v in self.views {
            let mut s = 0.0;
            for smp in &v.samples {
                if !usable(smp.target[c]) {
                    continue;
                }
                let a: f64 = (0..4).map(|k| smp.weights[k] * x[smp.texels[k] as usize]).sum();
                let d = a * smp.irradiance[c] - smp.target[c];
                s += d * d;
            }
            sum += v.scale * s;
        }
        sum
    }

    /// Per-texel `sqrt(dx² + dy² + ε²)` with forward differences.
    fn tv_terms(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size;
        let e2 = self.tv_epsilon * self.tv_epsilon;
        (0..n * n)
            .map(|i| {
                let (px, py) = (i % n, i / n);
                let dx = if px + 1 < n { x[i + 1] - x[i] } else { 0.0 };
                let dy = if py + 1 < n { x[i + n] - x[i] } else { 0.0 };
                (dx * dx + dy * dy + e2).sqrt()
            })
            .collect()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let tv: f64 = if self.tv_scale > 0.0 { self.tv_terms(x).iter().sum() } else { 0.0 };
        self.data_loss(x) + self.tv_scale * tv
    }

    /// `H·p` of the quadratic majorizer with TV weights `a`.
    fn hess_mul(&self, p: &[f64], a: &[f64], out: &mut [f64]) {
        let c = self.c;
        out.iter_mut().for_each(|o| *o = 0.0);
        for v in self.views {
            for smp in &v.samples {
                if !usable(smp.target[c]) {
                    continue;
                }
                let e = smp.irradiance[c];
                let ap: f64 = (0..4).map(|k| smp.weights[k] * p[smp.texels[k] as usize]).sum();
                let f = 2.0 * v.scale * e * e * ap;
                for k in 0..4 {
                    out[smp.texels[k] as usize] += f * smp.weights[k];
                }
            }
        }
        self.tv_apply(p, a, out);
    }

    /// Adds `tv_scale · Σ aᵢ ∇ᵀ∇ p` (the Hessian of `tv_scale/2 · Σ aᵢ|∇p|²`).
    fn tv_apply(&self, p: &[f64], a: &[f64], out: &mut [f64]) {
        if self.tv_scale == 0.0 {
            return;
        }
        let n = self.size;
        for i in 0..n * n {
            let (px, py) = (i % n, i / n);
            let w = self.tv_scale * a[i];
            if px + 1 < n {
                let d = w * (p[i + 1] - p[i]);
                out[i + 1] += d;
                out[i] -= d;
            }
            if py + 1 < n {
                let d = w * (p[i + n] - p[i]);
                out[i + n] += d;
                out[i] -= d;
            }
        }
    }

    /// Gradient of the data term plus the majorizer's TV gradient at `x`.
    fn gradient(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let c = self.c;
        let mut g = vec![0.0; x.len()];
        for v in self.views {
            for smp in &v.samples {
                if !usable(smp.target[c]) {
                    continue;
                }
                let e = smp.irradiance[c];
                let ax: f64 = (0..4).map(|k| smp.weights[k] * x[smp.texels[k] as usize]).sum();
                let f = 2.0 * v.scale * e * (ax * e - smp.target[c]);
                for k in 0..4 {
                    g[smp.texels[k] as usize] += f * smp.weights[k];
                }
            }
        }
        self.tv_apply(x, a, &mut g);
        g
    }

    fn diagonal(&self, a: &[f64]) -> Vec<f64> {
        let c = self.c;
        let n = self.size;
        let mut d = vec![0.0; n * n];
        for v in self.views {
            for smp in &v.samples {
                if !usable(smp.target[c]) {
                    continue;
                }
                let e = smp.irradiance[c];
                for k in 0..4 {
                    d[smp.texels[k] as usize] += 2.0 * v.scale * e * e * smp.weights[k] * smp.weights[k];
                }
            }
        }
        if self.tv_scale > 0.0 {
            for i in 0..n * n {
                let (px, py) = (i % n, i / n);
                let w = self.tv_scale * a[i];
                if px + 1 < n {
                    d[i] += w;
                    d[i + 1] += w;
                }
                if py + 1 < n {
                    d[i] += w;
                    d[i + n] += w;
                }
            }
        }
        d
    }

    /// Preconditioned CG on the majorizer, started at `x`.
    fn cg(&self, x: &mut [f64], a: &[f64], steps: usize) {
        let diag = self.diagonal(a);
        let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
        let mut r: Vec<f64> = self.gradient(x, a).iter().map(|g| -g).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, m)| r * m).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut hp = vec![0.0; x.len()];
        let r0 = rz;
        for _ in 0..steps {
            if !(rz > 1e-30 * r0.max(1e-300)) {
                break;
            }
            self.hess_mul(&p, a, &mut hp);
            let php: f64 = p.iter().zip(&hp).map(|(a, b)| a * b).sum();
            if !(php > 0.0) {
                break;
            }
            let alpha = rz / php;
            for i in 0..x.len() {
                x[i] += alpha * p[i];
                r[i] -= alpha * hp[i];
            }
            for i in 0..x.len() {
                z[i] = r[i] * inv[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..x.len() {
                p[i] = z[i] + beta * p[i];
            }
        }
    }

    /// Footprint-weighted mean of `target / irradiance`; 0.5 where unseen.
    fn initial(&self) -> Vec<f64> {
        let c = self.c;
        let n = self.size;
        let mut num = vec![0.0; n * n];
        let mut den = vec![0.0; n * n];
        for v in self.views {
            for smp in &v.samples {
                let e = smp.irradiance[c];
                if !usable(smp.target[c]) || !(e > 1e-6) {
                    continue;
                }
                for k in 0..4 {
                    num[smp.texels[k] as usize] += smp.weights[k] * smp.target[c] / e;
                    den[smp.texels[k] as usize] += smp.weights[k];
                }
            }
        }
        num.iter().zip(&den).map(|(a, b)| if *b > 0.0 { a / b } else { 0.5 }).collect()
    }
}

/// Recovers a `size × size` albedo texture from posed views.
pub fn recover(
    views: &[(Image, FaceParams)],
    model: &MorphableModel,
    size: usize,
    opts: &RecoverOptions,
) -> Result<RecoveredTexture> {
    if views.is_empty() {
        return Err(Error::InvalidInput("texture recovery needs at least one view".into()));
    }
    if size < 2 {
        return Err(Error::InvalidInput("texture size must be at least 2".into()));
    }
    let uv = model.uv_f64();
    let built: Vec<Result<View>> =
        par::map_indexed(views.len(), |i| build_view(model, &uv, &views[i].0, &views[i].1, size, opts));
    let built = built.into_iter().collect::<Result<Vec<View>>>()?;
    let validity = validity_of(&built, size);
    if validity.data.iter().all(|&v| v == 0.0) {
        return Err(Error::NoVisibility);
    }

    let tv_scale = opts.lambda_tv / (size * size) as f64;
    let channels: Vec<(Vec<f64>, Vec<f64>)> = par::map_indexed(3, |c| {
        let ch = Channel {
            views: &built,
            c,
            size,
            tv_scale,
            tv_epsilon: opts.tv_epsilon,
        };
        let mut x = ch.initial();
        let mut trace = vec![ch.objective(&x)];
        for _ in 0..opts.iterations {
            let a: Vec<f64> = ch.tv_terms(&x).iter().map(|s| 1.0 / s).collect();
            let before = x.clone();
            ch.cg(&mut x, &a, opts.cg_iterations);
            let f = ch.objective(&x);
            // Guard against round-off on a converged iterate.
            if f > *trace.last().expect("non-empty") {
                x = before;
                trace.push(*trace.last().expect("non-empty"));
                break;
            }
            trace.push(f);
        }
        (x, trace)
    });

    let mut texture = Image::new(size, size, 3);
    for (c, (x, _)) in channels.iter().enumerate() {
        for (i, v) in x.iter().enumerate() {
            texture.data[i * 3 + c] = *v;
        }
    }
    let steps = channels.iter().map(|(_, t)| t.len()).max().unwrap_or(0);
    let objective_trace = (0..steps)
        .map(|k| channels.iter().map(|(_, t)| t[k.min(t.len() - 1)]).sum())
        .collect();
    Ok(RecoveredTexture {
        texture,
        validity,
        objective_trace,
    })
}

/// Fills texels with zero validity by harmonic interpolation: every filled
/// texel ends equal to the mean of its in-frame 4-neighbours (to 1e-6),
/// solved by conjugate gradients on the graph Laplacian of the unseen texels.
/// On a grid every unseen region borders a valid texel, so the system is
/// positive definite.
pub fn inpaint_invalid(rtex: &RecoveredTexture, iterations: usize) -> Result<Image> {
    let tex = &rtex.texture;
    let (w, h, ch) = (tex.width, tex.height, tex.channels);
    let valid = rtex.valid_mask();
    valid.check_dims(w, h)?;
    if valid.is_empty() {
        return Err(Error::NoValidTexels);
    }
    let mut out = tex.clone();
    let unknown: Vec<usize> = (0..w * h).filter(|&i| !valid.data[i]).collect();
    if unknown.is_empty() {
        return Ok(out);
    }
    let mut slot = vec![usize::MAX; w * h];
    for (k, &i) in unknown.iter().enumerate() {
        slot[i] = k;
    }
    let neighbours = |i: usize| {
        let (x, y) = (i % w, i / w);
        let mut n = [usize::MAX; 4];
        if x > 0 {
            n[0] = i - 1;
        }
        if x + 1 < w {
            n[1] = i + 1;
        }
        if y > 0 {
            n[2] = i - w;
        }
        if y + 1 < h {
            n[3] = i + w;
        }
        n
    };

    let valid_count = valid.count() as f64;

    for c in 0..ch {
        let mean = (0..w * h).filter(|&i| valid.data[i]).map(|i| tex.data[i * ch + c]).sum::<f64>() / valid_count;
        // L x = b over the unknowns, L = degree·I − adjacency; start at the valid mean.
        let n = unknown.len();
        let mut x: Vec<f64> = vec![mean; n];
        let mut b = vec![0.0; n];
        let mut deg = vec![0.0; n];
        for (k, &i) in unknown.iter().enumerate() {
            for j in neighbours(i) {
                if j == usize::MAX {
                    continue;
                }
                deg[k] += 1.0;
                if valid.data[j] {
                    b[k] += tex.data[j * ch + c];
                }
            }
        }
        let apply = |p: &[f64], out: &mut [f64]| {
            for (k, &i) in unknown.iter().enumerate() {
                let mut s = deg[k] * p[k];
                for j in neighbours(i) {
                    if j != usize::MAX && slot[j] != usize::MAX {
                        s -= p[slot[j]];
                    }
                }
                out[k] = s;
            }
        };
        let mut lx = vec![0.0; n];
        apply(&x, &mut lx);
        let mut r: Vec<f64> = (0..n).map(|k| b[k] - lx[k]).collect();
        let mut z: Vec<f64> = (0..n).map(|k| r[k] / deg[k]).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut lp = vec![0.0; n];
        for _ in 0..iterations.max(1) {
            // r/deg is the gap between a texel and its neighbour mean.
            let gap = (0..n).map(|k| (r[k] / deg[k]).abs()).fold(0.0, f64::max);
            if gap < 1e-6 {
                break;
            }
            apply(&p, &mut lp);
            let plp: f64 = p.iter().zip(&lp).map(|(a, b)| a * b).sum();
            if !(plp > 0.0) {
                break;
            }
            let alpha = rz / plp;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * lp[k];
                z[k] = r[k] / deg[k];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        for (k, &i) in unknown.iter().enumerate() {
            out.data[i * ch + c] = x[k];
        }
    }
    Ok(out)
}

/// Renders `texture` under new lighting.
pub fn relight(
    texture: &Image,
    model: &MorphableModel,
    coeffs: &ShapeCoeffs,
    pose: &crate::camera::RigidPose,
    cam: &Camera,
    lighting: &ShLighting,
) -> Result<Image> {
    Ok(render_illuminated(model, coeffs, pose, cam, texture, lighting)?.image)
}

/// Texels whose surface point faces the frontal camera (model-space normal
/// with negative z) on the geometry given by `coeffs`.
pub fn front_hemisphere(model: &MorphableModel, coeffs: &ShapeCoeffs, size: usize) -> Result<Mask> {
    let verts = model.synthesize_vertices(coeffs)?;
    let normals = vertex_normals(&verts, &model.triangles);
    let cam = Camera {
        focal: 1.0,
        principal: [0.0, 0.0],
        width: size,
        height: size,
        near: 0.5,
        far: 2.0,
    };
    let screen: Vec<[f64; 3]> = model
        .uv
        .iter()
        .map(|t| [t[0] as f64 * size as f64, (1.0 - t[1] as f64) * size as f64, 1.0])
        .collect();
    let g = rasterize(&screen, &model.triangles, &cam, &RasterOptions { cull_backfaces: false });
    Ok(Mask {
        width: size,
        height: size,
        data: (0..size * size)
            .map(|i| {
                let t = g.triangle[i];
                if t == EMPTY {
                    return false;
                }
                let tri = &model.triangles[t as usize];
                let b = &g.bary[i];
                let n: Vec3 = (0..3).map(|k| normals.normals[tri[k] as usize] * b[k]).sum();
                n.z < 0.0
            })
            .collect(),
    })
}
