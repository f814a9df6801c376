//! Analysis-by-synthesis fitting of face parameters to an image.
//!
//! The objective is `w_photo·photometric + w_lm·landmark + w_reg·Σ(p/σ)²`,
//! minimized with Adam over σ-normalized coefficients in two stages: pose
//! from landmarks alone, then all parameters jointly. The photometric term
//! uses the current render's coverage as its mask.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

#[allow(unused_imports)]
use crate::float::Float;
use crate::camera::{Camera, RigidPose};
use crate::diffrender::{photometric_backward, vertex_backward, Scene, VertexGrads};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mesh::Vec3;
use crate::model::{MorphableModel, ShapeCoeffs};
use crate::optim::{Adam, AdamConfig};
use crate::shading::{Rendered, ShLighting};

/// Everything needed to render one face besides the model and texture.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceParams {
    pub coeffs: ShapeCoeffs,
    pub pose: RigidPose,
    pub camera: Camera,
    pub lighting: ShLighting,
}

impl FaceParams {
    /// Mean shape, identity rotation, unit lighting.
    pub fn neutral(model: &MorphableModel, camera: Camera, translation: Vec3) -> Self {
        FaceParams {
            coeffs: ShapeCoeffs::zeros(model.k_shape(), model.k_expr()),
            pose: RigidPose::new(Vec3::zeros(), translation),
            camera,
            lighting: ShLighting::constant(1.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.shape.iter().chain(&self.coeffs.expr).all(|v| v.is_finite())
            && self.pose.is_finite()
            && self.lighting.is_finite()
            && self.camera.focal.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub vertex: u32,
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

/// 2D annotations of model vertices, in pixels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Landmarks2D {
    pub points: Vec<Landmark>,
}

impl Landmarks2D {
    /// Annotations placed exactly at the projections of `vertices`.
    pub fn from_projection(screen: &[[f64; 3]], vertices: &[u32]) -> Self {
        Landmarks2D {
            points: vertices
                .iter()
                .map(|&v| {
                    let p = screen[v as usize];
                    Landmark {
                        vertex: v,
                        x: p[0],
                        y: p[1],
                        weight: 1.0,
                    }
                })
                .collect(),
        }
    }

    pub fn validate(&self, num_vertices: usize) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if p.vertex as usize >= num_vertices {
                return Err(Error::InvalidInput(format!(
                    "landmark {i}: vertex {} out of range ({num_vertices} vertices)",
                    p.vertex
                )));
            }
            if !(p.weight >= 0.0 && p.weight.is_finite()) || !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::InvalidInput(format!("landmark {i}: invalid position or weight")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkLoss {
    pub loss: f64,
    /// `∂loss/∂(screen x, screen y)` per annotated vertex, in annotation order.
    pub grad: Vec<(u32, [f64; 2])>,
}

/// Weighted mean squared pixel distance, `Σ wᵢ‖pᵢ − aᵢ‖² / Σ wᵢ`.
pub fn landmark_loss(screen: &[[f64; 3]], landmarks: &Landmarks2D) -> Result<LandmarkLoss> {
    landmarks.validate(screen.len())?;
    let total: f64 = landmarks.points.iter().map(|p| p.weight).sum();
    if landmarks.points.is_empty() || total <= 0.0 {
        return Err(Error::EmptyLandmarks);
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(landmarks.points.len());
    for p in &landmarks.points {
        let s = screen[p.vertex as usize];
        let (dx, dy) = (s[0] - p.x, s[1] - p.y);
        loss += p.weight * (dx * dx + dy * dy);
        grad.push((p.vertex, [2.0 * p.weight * dx / total, 2.0 * p.weight * dy / total]));
    }
    Ok(LandmarkLoss { loss: loss / total, grad })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub adam: AdamConfig,
    /// Landmark-only pose iterations (skipped without landmarks).
    pub landmark_iterations: usize,
    pub joint_iterations: usize,
    /// Learning rate decays geometrically to `lr · final_lr_ratio` over each stage.
    pub final_lr_ratio: f64,
    pub w_photo: f64,
    /// Per square pixel.
    pub w_lm: f64,
    pub w_reg: f64,
    pub optimize_texture: bool,
    pub optimize_focal: bool,
    /// Start the joint stage from the least-squares lighting of the current geometry.
    pub lighting_init: bool,
    /// The photometric mask is the render's coverage eroded by this many
    /// pixels, keeping silhouette pixels (whose coverage the gradient cannot
    /// change) out of the loss.
    pub mask_erosion: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            adam: AdamConfig::default(),
            landmark_iterations: 100,
            joint_iterations: 400,
            final_lr_ratio: 0.05,
            w_photo: 1.0,
            w_lm: 2e-3,
            w_reg: 1e-3,
            optimize_texture: false,
            optimize_focal: false,
            lighting_init: true,
            mask_erosion: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Landmarks,
    Joint,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Landmarks => "landmarks",
            Stage::Joint => "joint",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub stage: Stage,
    pub iteration: usize,
    pub objective: f64,
    pub photometric: f64,
    pub landmark: f64,
    pub regularizer: f64,
    pub lr: f64,
    /// Parameters at this iteration (before the step).
    pub params: FaceParams,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    /// One row per evaluation, including the final evaluation of each stage.
    pub rows: Vec<TraceRow>,
    /// Optimizer updates taken across all stages.
    pub steps: usize,
}

impl FitTrace {
    pub fn stage(&self, stage: Stage) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.stage == stage)
    }

    /// One line per iteration: losses, learning rate and pose.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage,iteration,objective,photometric,landmark,regularizer,lr,rx,ry,rz,tx,ty,tz\n");
        for r in &self.rows {
            let (rot, t) = (r.params.pose.rotation, r.params.pose.translation);
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e},{:e},{:e},{},{},{},{},{},{}",
                r.stage.name(),
                r.iteration,
                r.objective,
                r.photometric,
                r.landmark,
                r.regularizer,
                r.lr,
                rot.x,
                rot.y,
                rot.z,
                t.x,
                t.y,
                t.z
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: FaceParams,
    pub texture: Image,
    pub trace: FitTrace,
    /// Joint objective at the initial parameters and at the returned ones.
    pub initial_objective: f64,
    pub objective: f64,
}

/// Maps the optimizer's flat vector to parameters and back.
struct Layout {
    ks: usize,
    ke: usize,
    sigma_s: Vec<f64>,
    sigma_e: Vec<f64>,
    focal0: f64,
    focal: bool,
    texture: bool,
    tex_len: usize,
}

const POSE: usize = 6;
const GAMMA: usize = 27;

impl Layout {
    fn pose_at(&self) -> usize {
        self.ks + self.ke
    }
    fn gamma_at(&self) -> usize {
        self.pose_at() + POSE
    }
    fn focal_at(&self) -> usize {
        self.gamma_at() + GAMMA
    }
    fn texture_at(&self) -> usize {
        self.focal_at() + self.focal as usize
    }
    fn len(&self) -> usize {
        self.texture_at() + if self.texture { self.tex_len } else { 0 }
    }

    fn pack(&self, p: &FaceParams, tex: &Image) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.extend(p.coeffs.shape.iter().zip(&self.sigma_s).map(|(c, s)| c / s));
        x.extend(p.coeffs.expr.iter().zip(&self.sigma_e).map(|(c, s)| c / s));
        x.extend(p.pose.rotation.iter().chain(p.pose.translation.iter()));
        x.extend(p.lighting.gamma.iter().flatten());
        if self.focal {
            x.push(p.camera.focal / self.focal0);
        }
        if self.texture {
            x.extend(&tex.data);
        }
        x
    }

    fn unpack(&self, x: &[f64], p: &mut FaceParams, tex: &mut Image) {
        for j in 0..self.ks {
            p.coeffs.shape[j] = x[j] * self.sigma_s[j];
        }
        for j in 0..self.ke {
            p.coeffs.expr[j] = x[self.ks + j] * self.sigma_e[j];
        }
        let o = self.pose_at();
        p.pose.rotation = Vec3::new(x[o], x[o + 1], x[o + 2]);
        p.pose.translation = Vec3::new(x[o + 3], x[o + 4], x[o + 5]);
        let o = self.gamma_at();
        for c in 0..3 {
            for b in 0..9 {
                p.lighting.gamma[c][b] = x[o + c * 9 + b];
            }
        }
        if self.focal {
            p.camera.focal = x[self.focal_at()] * self.focal0;
        }
        if self.texture {
            let o = self.texture_at();
            for (t, v) in tex.data.iter_mut().zip(&x[o..]) {
                *t = v.clamp(0.0, 1.0);
            }
        }
    }

    fn active(&self, stage: Stage, i: usize) -> bool {
        match stage {
            Stage::Landmarks => (self.pose_at()..self.gamma_at()).contains(&i),
            Stage::Joint => true,
        }
    }
}

struct Eval {
    objective: f64,
    photometric: f64,
    landmark: f64,
    regularizer: f64,
    grad: Vec<f64>,
}

struct Problem<'a> {
    model: &'a MorphableModel,
    target: &'a Image,
    landmarks: Option<&'a Landmarks2D>,
    opts: &'a FitOptions,
    layout: Layout,
    uv: Vec<[f64; 2]>,
}

impl Problem<'_> {
    /// Objective and gradient in packed coordinates. `None` when the render
    /// covers no pixel in the joint stage.
    fn evaluate(&self, stage: Stage, x: &[f64], params: &FaceParams, tex: &Image) -> Result<Option<Eval>> {
        let opts = self.opts;
        let scene = Scene {
            model: self.model,
            texture: tex.clone(),
            params: params.clone(),
        };
        let rendered: Rendered = scene.render()?;
        let n = rendered.vertices.len();

        let mut photometric = 0.0;
        let mut vg = VertexGrads::zeros(n);
        let mut d_tex = None;
        if stage == Stage::Joint && opts.w_photo > 0.0 {
            let mask = rendered.mask.eroded(opts.mask_erosion);
            if mask.is_empty() {
                return Ok(None);
            }
            let (l, g, dt) = photometric_backward(
                &rendered,
                &self.model.triangles,
                &self.uv,
                tex,
                self.target,
                &mask,
                opts.w_photo,
                self.layout.texture,
            )?;
            photometric = l / opts.w_photo;
            vg = g;
            d_tex = dt;
        }

        let mut landmark = 0.0;
        if let Some(lm) = self.landmarks {
            let ll = landmark_loss(&rendered.projection.screen, lm)?;
            landmark = ll.loss;
            for (v, g) in ll.grad {
                vg.screen[v as usize][0] += opts.w_lm * g[0];
                vg.screen[v as usize][1] += opts.w_lm * g[1];
            }
        }

        let mut grad = vec![0.0; x.len()];
        let l = &self.layout;
        if l.focal && stage == Stage::Joint {
            let mut g_f = 0.0;
            for (g, p) in vg.screen.iter().zip(&rendered.projection.camera_points) {
                g_f += g[0] * p.x / p.z + g[1] * p.y / p.z;
            }
            grad[l.focal_at()] = g_f * l.focal0;
        }
        let grads = vertex_backward(self.model, params, &rendered, &vg);

        let mut regularizer = 0.0;
        for j in 0..l.ks {
            let z = x[j];
            regularizer += z * z;
            grad[j] = grads.shape[j] * l.sigma_s[j] + 2.0 * opts.w_reg * z;
        }
        for j in 0..l.ke {
            let z = x[l.ks + j];
            regularizer += z * z;
            grad[l.ks + j] = grads.expr[j] * l.sigma_e[j] + 2.0 * opts.w_reg * z;
        }
        grad[l.pose_at()..l.gamma_at()].copy_from_slice(&grads.pose);
        for c in 0..3 {
            for b in 0..9 {
                grad[l.gamma_at() + c * 9 + b] = grads.gamma[c][b];
            }
        }
        if let Some(dt) = d_tex {
            grad[l.texture_at()..].copy_from_slice(&dt.data);
        }
        for (i, g) in grad.iter_mut().enumerate() {
            if !l.active(stage, i) {
                *g = 0.0;
            }
        }

        let objective = match stage {
            Stage::Landmarks => opts.w_lm * landmark,
            Stage::Joint => opts.w_photo * photometric + opts.w_lm * landmark + opts.w_reg * regularizer,
        };
        Ok(Some(Eval {
            objective,
            photometric,
            landmark,
            regularizer,
            grad,
        }))
    }
}

/// Least-squares SH coefficients that best explain `target` on `mask`
/// given the geometry and albedo of `rendered` (the pre-clamp image is
/// linear in γ). `None` when a channel's system is singular.
pub fn solve_lighting(
    rendered: &Rendered,
    triangles: &[[u32; 3]],
    target: &Image,
    mask: &crate::image::Mask,
) -> Option<ShLighting> {
    use nalgebra::{SMatrix, SVector};
    let g = &rendered.gbuffer;
    let phi: Vec<[f64; 9]> = rendered.view_normals.iter().map(crate::shading::sh_basis_unit).collect();
    let mut ata = [SMatrix::<f64, 9, 9>::zeros(); 3];
    let mut atb = [SVector::<f64, 9>::zeros(); 3];
    for i in 0..g.triangle.len() {
        let t = g.triangle[i];
        if t == crate::raster::EMPTY || !mask.data[i] {
            continue;
        }
        let tri = &triangles[t as usize];
        let b = &g.bary[i];
        let mut row = SVector::<f64, 9>::zeros();
        for k in 0..3 {
            let p = &phi[tri[k] as usize];
            for j in 0..9 {
                row[j] += b[k] * p[j];
            }
        }
        for c in 0..3 {
            let a = rendered.albedo.data[i * 3 + c];
            let r = row * a;
            ata[c] += r * r.transpose();
            atb[c] += r * target.data[i * 3 + c];
        }
    }
    let mut gamma = [[0.0; 9]; 3];
    for c in 0..3 {
        let scale = ata[c].trace() / 9.0;
        if !(scale > 0.0) {
            return None;
        }
        let reg = ata[c] + SMatrix::<f64, 9, 9>::identity() * (1e-9 * scale);
        let sol = reg.cholesky()?.solve(&atb[c]);
        for j in 0..9 {
            gamma[c][j] = sol[j];
        }
    }
    let out = ShLighting { gamma };
    out.is_finite().then_some(out)
}

/// Fits `init` to `target`; returns the best iterate found (never worse than
/// `init` under the joint objective) and the per-iteration trace.
pub fn fit(
    target: &Image,
    model: &MorphableModel,
    texture: &Image,
    init: &FaceParams,
    landmarks: Option<&Landmarks2D>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let cam = &init.camera;
    if target.width != cam.width || target.height != cam.height || target.channels != 3 {
        return Err(Error::Dimension {
            what: "target image pixels",
            expected: cam.width * cam.height,
            got: target.width * target.height,
        });
    }
    model.check_coeffs(&init.coeffs)?;
    if let Some(lm) = landmarks {
        lm.validate(model.num_vertices)?;
    }
    let positive = |s: &f32| if *s > 0.0 { *s as f64 } else { 1.0 };
    let layout = Layout {
        ks: model.k_shape(),
        ke: model.k_expr(),
        sigma_s: model.shape_sigmas.iter().map(positive).collect(),
        sigma_e: model.expr_sigmas.iter().map(positive).collect(),
        focal0: cam.focal,
        focal: opts.optimize_focal,
        texture: opts.optimize_texture,
        tex_len: texture.data.len(),
    };
    let problem = Problem {
        model,
        target,
        landmarks,
        opts,
        uv: model.uv_f64(),
        layout,
    };
    let layout = &problem.layout;

    let mut params = init.clone();
    let mut tex = texture.clone();
    let x0 = layout.pack(init, texture);
    let mut trace = FitTrace::default();

    let init_eval = problem
        .evaluate(Stage::Joint, &x0, init, texture)?
        .ok_or(Error::InitCoverage)?;
    if !init_eval.objective.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            last_finite: Box::new(init.clone()),
        });
    }
    let initial_objective = init_eval.objective;
    let data = opts.w_photo * init_eval.photometric + opts.w_lm * init_eval.landmark;
    if data == 0.0 {
        trace.rows.push(TraceRow {
            stage: Stage::Joint,
            iteration: 0,
            objective: init_eval.objective,
            photometric: init_eval.photometric,
            landmark: init_eval.landmark,
            regularizer: init_eval.regularizer,
            lr: 0.0,
            params: init.clone(),
        });
        return Ok(FitResult {
            params: init.clone(),
            texture: texture.clone(),
            trace,
            initial_objective,
            objective: initial_objective,
        });
    }

    let mut x = x0.clone();
    let mut stages = Vec::new();
    if landmarks.is_some() && opts.landmark_iterations > 0 && opts.w_lm > 0.0 {
        stages.push((Stage::Landmarks, opts.landmark_iterations));
    }
    stages.push((Stage::Joint, opts.joint_iterations));

    let mut best_joint = (initial_objective, x0.clone());
    for (stage, iterations) in stages {
        if stage == Stage::Joint && opts.lighting_init {
            layout.unpack(&x, &mut params, &mut tex);
            let scene = Scene {
                model,
                texture: tex.clone(),
                params: params.clone(),
            };
            let r = scene.render()?;
            if let Some(l) = solve_lighting(&r, &model.triangles, target, &r.mask.eroded(opts.mask_erosion)) {
                params.lighting = l;
                x = layout.pack(&params, &tex);
            }
        }
        let mut adam = Adam::new(x.len(), opts.adam);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for it in 0..=iterations {
            layout.unpack(&x, &mut params, &mut tex);
            let Some(e) = problem.evaluate(stage, &x, &params, &tex)? else {
                log::warn!("fit: render lost coverage at {} iteration {it}; stopping stage", stage.name());
                break;
            };
            if !e.objective.is_finite() || e.grad.iter().any(|g| !g.is_finite()) {
                let mut last = init.clone();
                let mut t = texture.clone();
                let good = best.as_ref().map_or(&x0, |b| &b.1);
                layout.unpack(good, &mut last, &mut t);
                return Err(Error::Divergence {
                    iteration: it,
                    last_finite: Box::new(last),
                });
            }
            let frac = if iterations == 0 { 0.0 } else { it as f64 / iterations as f64 };
            let lr = opts.adam.lr * opts.final_lr_ratio.powf(frac);
            trace.rows.push(TraceRow {
                stage,
                iteration: it,
                objective: e.objective,
                photometric: e.photometric,
                landmark: e.landmark,
                regularizer: e.regularizer,
                lr,
                params: params.clone(),
            });
            if best.as_ref().is_none_or(|b| e.objective < b.0) {
                best = Some((e.objective, x.clone()));
            }
            if stage == Stage::Joint && e.objective < best_joint.0 {
                best_joint = (e.objective, x.clone());
            }
            if it < iterations {
                adam.step(&mut x, &e.grad, lr);
                trace.steps += 1;
            }
        }
        if let Some((_, bx)) = best {
            x = bx;
        }
    }

    let (objective, bx) = best_joint;
    layout.unpack(&bx, &mut params, &mut tex);
    Ok(FitResult {
        params,
        texture: tex,
        trace,
        initial_objective,
        objective,
    })
}

fn fmt_list(values: impl IntoIterator<Item = f64>) -> String {
    let mut s = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v:?}");
    }
    s
}

/// Text form: one `key = values` line per field. Floats use the shortest
/// representation that parses back to the same bits.
pub fn params_to_text(p: &FaceParams) -> String {
    let c = &p.camera;
    let mut s = String::from("# texmorph face parameters\n");
    let _ = writeln!(s, "shape = {}", fmt_list(p.coeffs.shape.iter().copied()));
    let _ = writeln!(s, "expression = {}", fmt_list(p.coeffs.expr.iter().copied()));
    let _ = writeln!(s, "rotation = {}", fmt_list(p.pose.rotation.iter().copied()));
    let _ = writeln!(s, "translation = {}", fmt_list(p.pose.translation.iter().copied()));
    let _ = writeln!(s, "focal = {:?}", c.focal);
    let _ = writeln!(s, "principal = {}", fmt_list(c.principal));
    let _ = writeln!(s, "image_size = {} {}", c.width, c.height);
    let _ = writeln!(s, "near = {:?}", c.near);
    let _ = writeln!(s, "far = {:?}", c.far);
    for (name, row) in ["gamma_r", "gamma_g", "gamma_b"].iter().zip(&p.lighting.gamma) {
        let _ = writeln!(s, "{name} = {}", fmt_list(row.iter().copied()));
    }
    s
}

pub const PARAM_KEYS: [&str; 12] = [
    "shape",
    "expression",
    "rotation",
    "translation",
    "focal",
    "principal",
    "image_size",
    "near",
    "far",
    "gamma_r",
    "gamma_g",
    "gamma_b",
];

/// Splits `key = values` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            });
        };
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_floats(line: usize, key: &str, value: &str, count: Option<usize>) -> Result<Vec<f64>> {
    let vals = value
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("`{key}`: `{t}` is not a number"),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    if let Some(n) = count {
        if vals.len() != n {
            return Err(Error::Parse {
                line,
                message: format!("`{key}` needs {n} values, found {}", vals.len()),
            });
        }
    }
    Ok(vals)
}

/// Parses [`params_to_text`] output. Unknown keys are returned as warnings.
pub fn params_from_text(text: &str) -> Result<(FaceParams, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut found: [Option<(usize, String)>; 12] = Default::default();
    for (line, key, value) in parse_key_values(text)? {
        match PARAM_KEYS.iter().position(|k| *k == key) {
            Some(i) => {
                if found[i].is_some() {
                    return Err(Error::Parse {
                        line,
                        message: format!("duplicate field `{key}`"),
                    });
                }
                found[i] = Some((line, value));
            }
            None => warnings.push(format!("line {line}: unknown field `{key}` ignored")),
        }
    }
    let get = |i: usize, n: Option<usize>| -> Result<Vec<f64>> {
        let (line, v) = found[i].as_ref().ok_or_else(|| Error::MissingField(PARAM_KEYS[i].to_string()))?;
        parse_floats(*line, PARAM_KEYS[i], v, n)
    };
    let rot = get(2, Some(3))?;
    let tr = get(3, Some(3))?;
    let principal = get(5, Some(2))?;
    let (size_line, size) = found[6]
        .as_ref()
        .ok_or_else(|| Error::MissingField("image_size".to_string()))?;
    let dims = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<core::result::Result<Vec<usize>, _>>()
        .ok()
        .filter(|d| d.len() == 2)
        .ok_or_else(|| Error::Parse {
            line: *size_line,
            message: "`image_size` needs two non-negative integers".to_string(),
        })?;
    let mut gamma = [[0.0; 9]; 3];
    for (c, row) in gamma.iter_mut().enumerate() {
        row.copy_from_slice(&get(9 + c, Some(9))?);
    }
    let params = FaceParams {
        coeffs: ShapeCoeffs {
            shape: get(0, None)?,
            expr: get(1, None)?,
        },
        pose: RigidPose::new(Vec3::new(rot[0], rot[1], rot[2]), Vec3::new(tr[0], tr[1], tr[2])),
        camera: Camera {
            focal: get(4, Some(1))?[0],
            principal: [principal[0], principal[1]],
            width: dims[0],
            height: dims[1],
            near: get(7, Some(1))?[0],
            far: get(8, Some(1))?[0],
        },
        lighting: ShLighting { gamma },
    };
    Ok((params, warnings))
}

#[cfg(test)]
mod tests;
