//! Central finite-difference check of [`backward`](super::backward).
//!
//! Each parameter is perturbed by `±rel_step·max(|x|, 1)`. When either
//! perturbed render assigns a different triangle, bilinear cell or clamp state
//! to any pixel than the base render, the loss is not smooth across the step;
//! such parameters are reported and excluded rather than compared.

#[allow(unused_imports)]
use crate::float::Float;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{backward_rendered, photometric_loss, Scene};
use crate::camera::{Camera, RigidPose};
use crate::error::Result;
use crate::fitting::FaceParams;
use crate::image::{Image, Mask};
use crate::mesh::{Mesh, Vec3};
use crate::model::{build_from_samples, MorphableModel, SampleKind, ShapeCoeffs};
use crate::raster::{edge, footprint, interpolate_uv, EMPTY};
use crate::shading::{Rendered, ShLighting};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Shape,
    Expr,
    Pose,
    Gamma,
    Texture,
}

impl Block {
    pub const ALL: [Block; 5] = [Block::Shape, Block::Expr, Block::Pose, Block::Gamma, Block::Texture];

    pub fn name(self) -> &'static str {
        match self {
            Block::Shape => "shape",
            Block::Expr => "expression",
            Block::Pose => "pose",
            Block::Gamma => "gamma",
            Block::Texture => "texture",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instability {
    /// A pixel changed triangle or coverage.
    Coverage,
    /// A pixel crossed a bilinear cell or clamp boundary.
    Kink,
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub rel_step: f64,
    pub tolerance: f64,
    /// Entries with `max(|analytic|, |numeric|)` below `abs_floor · loss` count as agreeing.
    pub abs_floor: f64,
    /// Upper bound on texel channels checked; a seeded random subset is used beyond it.
    pub max_texture_entries: usize,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            rel_step: 1e-4,
            tolerance: 1e-3,
            abs_floor: 1e-7,
            max_texture_entries: 1024,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockReport {
    pub block: Block,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: Option<usize>,
    pub excluded: Vec<(usize, Instability)>,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub loss: f64,
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_err <= self.tolerance)
    }

    pub fn block(&self, block: Block) -> &BlockReport {
        self.blocks.iter().find(|b| b.block == block).expect("all blocks reported")
    }

    pub fn excluded_count(&self) -> usize {
        self.blocks.iter().map(|b| b.excluded.len()).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "loss = {:.9e}", self.loss);
        let _ = writeln!(s, "tolerance = {:e}", self.tolerance);
        for b in &self.blocks {
            let status = if b.max_rel_err <= self.tolerance { "PASS" } else { "FAIL" };
            let _ = writeln!(
                s,
                "{status} {:<10} checked={:<5} max_rel_err={:.3e} excluded={}",
                b.block.name(),
                b.checked,
                b.max_rel_err,
                b.excluded.len()
            );
            for (i, why) in &b.excluded {
                let reason = match why {
                    Instability::Coverage => "coverage-unstable",
                    Instability::Kink => "kink-unstable",
                };
                let _ = writeln!(s, "  excluded {}[{i}]: {reason}", b.block.name());
            }
        }
        let _ = writeln!(s, "result = {}", if self.passed() { "pass" } else { "fail" });
        s
    }
}

fn block_len(scene: &Scene<'_>, block: Block) -> usize {
    match block {
        Block::Shape => scene.params.coeffs.shape.len(),
        Block::Expr => scene.params.coeffs.expr.len(),
        Block::Pose => 6,
        Block::Gamma => 27,
        Block::Texture => scene.texture.data.len(),
    }
}

fn param_mut<'s>(scene: &'s mut Scene<'_>, block: Block, i: usize) -> &'s mut f64 {
    let p = &mut scene.params;
    match block {
        Block::Shape => &mut p.coeffs.shape[i],
        Block::Expr => &mut p.coeffs.expr[i],
        Block::Pose if i < 3 => &mut p.pose.rotation[i],
        Block::Pose => &mut p.pose.translation[i - 3],
        Block::Gamma => &mut p.lighting.gamma[i / 9][i % 9],
        Block::Texture => &mut scene.texture.data[i],
    }
}

fn analytic(grads: &super::Gradients, block: Block, i: usize) -> f64 {
    match block {
        Block::Shape => grads.shape[i],
        Block::Expr => grads.expr[i],
        Block::Pose => grads.pose[i],
        Block::Gamma => grads.gamma[i / 9][i % 9],
        Block::Texture => grads.texture.as_ref().map_or(0.0, |t| t.data[i]),
    }
}

/// Per-pixel (triangle, bilinear cell, clamp states); equal signatures mean the
/// loss is smooth between the two renders.
fn signature(scene: &Scene<'_>, r: &Rendered) -> Vec<(u32, usize, u8)> {
    let uv = scene.model.uv_f64();
    let g = &r.gbuffer;
    (0..g.triangle.len())
        .map(|i| {
            let t = g.triangle[i];
            if t == EMPTY {
                return (EMPTY, 0, 0);
            }
            let [u, v] = interpolate_uv(&uv, &scene.model.triangles[t as usize], &g.bary[i]);
            let fp = footprint(u, v, scene.texture.width, scene.texture.height);
            let mut clamp = 0u8;
            for c in 0..3 {
                let p = r.pre_clamp.data[i * 3 + c];
                let state = if p < 0.0 { 1 } else if p > 1.0 { 2 } else { 0 };
                clamp |= state << (2 * c);
            }
            (t, fp.texels[0], clamp)
        })
        .collect()
}

fn classify(base: &[(u32, usize, u8)], other: &[(u32, usize, u8)]) -> Option<Instability> {
    let mut kink = false;
    for (a, b) in base.iter().zip(other) {
        if a.0 != b.0 {
            return Some(Instability::Coverage);
        }
        if a != b {
            kink = true;
        }
    }
    kink.then_some(Instability::Kink)
}

/// Compares analytic gradients of the masked photometric loss with central differences.
pub fn gradcheck(
    scene: &Scene<'_>,
    target: &Image,
    mask: &Mask,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    let base = scene.render()?;
    let (loss, grads) = backward_rendered(scene, &base, target, mask, true)?;
    let base_sig = signature(scene, &base);
    let floor = opts.abs_floor * loss.abs().max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut blocks = Vec::new();
    for block in Block::ALL {
        let len = block_len(scene, block);
        let indices: Vec<usize> = if block == Block::Texture && len > opts.max_texture_entries {
            let mut idx = sample(&mut rng, len, opts.max_texture_entries).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..len).collect()
        };
        let mut report = BlockReport {
            block,
            checked: 0,
            max_rel_err: 0.0,
            worst_index: None,
            excluded: Vec::new(),
        };
        for i in indices {
            let x = *param_mut(&mut scene.clone(), block, i);
            let h = opts.rel_step * x.abs().max(1.0);
            let eval = |delta: f64| -> Result<(f64, Option<Instability>)> {
                let mut s = scene.clone();
                *param_mut(&mut s, block, i) = x + delta;
                let r = s.render()?;
                let l = photometric_loss(&r.image, target, mask)?;
                Ok((l, classify(&base_sig, &signature(&s, &r))))
            };
            let (lp, ip) = eval(h)?;
            let (lm, im) = eval(-h)?;
            let unstable = match (ip, im) {
                (Some(Instability::Coverage), _) | (_, Some(Instability::Coverage)) => {
                    Some(Instability::Coverage)
                }
                (a, b) => a.or(b),
            };
            if let Some(why) = unstable {
                report.excluded.push((i, why));
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic(&grads, block, i);
            let scale = a.abs().max(numeric.abs());
            let err = if scale <= floor { 0.0 } else { (a - numeric).abs() / scale };
            report.checked += 1;
            if err > report.max_rel_err || report.worst_index.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst_index = Some(i);
            }
        }
        blocks.push(report);
    }
    Ok(GradcheckReport {
        loss,
        tolerance: opts.tolerance,
        blocks,
    })
}

/// Small self-contained scene for gradient checks.
#[derive(Debug, Clone)]
pub struct ToyScene {
    pub model: MorphableModel,
    pub texture: Image,
    pub params: FaceParams,
    pub target: Image,
    pub mask: Mask,
}

impl ToyScene {
    pub fn scene(&self) -> Scene<'_> {
        Scene {
            model: &self.model,
            texture: self.texture.clone(),
            params: self.params.clone(),
        }
    }
}

const GRID: usize = 5;

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

fn dome(rng: &mut ChaCha8Rng, jitter: f64) -> Vec<Vec3> {
    let mut v = Vec::new();
    for r in 0..GRID {
        for c in 0..GRID {
            let x = c as f64 / (GRID - 1) as f64 * 2.0 - 1.0;
            let y = r as f64 / (GRID - 1) as f64 * 2.0 - 1.0;
            let z = -0.35 * (1.0 - 0.5 * (x * x + y * y));
            v.push(Vec3::new(
                x + gauss(rng, jitter),
                y + gauss(rng, jitter),
                z + gauss(rng, 2.0 * jitter),
            ));
        }
    }
    v
}

fn dome_triangles() -> Vec<[u32; 3]> {
    let mut t = Vec::new();
    let idx = |r: usize, c: usize| (r * GRID + c) as u32;
    for r in 0..GRID - 1 {
        for c in 0..GRID - 1 {
            t.push([idx(r, c), idx(r + 1, c), idx(r + 1, c + 1)]);
            t.push([idx(r, c), idx(r + 1, c + 1), idx(r, c + 1)]);
        }
    }
    t
}

fn dome_uv() -> Vec<[f64; 2]> {
    let mut uv = Vec::new();
    for r in 0..GRID {
        for c in 0..GRID {
            uv.push([
                0.1 + 0.8 * c as f64 / (GRID - 1) as f64,
                0.9 - 0.8 * r as f64 / (GRID - 1) as f64,
            ]);
        }
    }
    uv
}

fn smooth_texture(rng: &mut ChaCha8Rng, size: usize) -> Image {
    let phase: [f64; 6] = core::array::from_fn(|_| rng.random_range(0.0..6.0));
    Image::from_fn(size, size, 3, |x, y, c| {
        let u = x as f64 / size as f64;
        let v = y as f64 / size as f64;
        0.5 + 0.2 * (2.0 * u + phase[c]).sin() * (1.5 * v + phase[c + 3]).cos()
    })
}

/// A 16×16 scene with a bumpy 5×5-vertex dome (32 triangles), a 3+2
/// component toy model, a smooth 8×8 texture and a target rendered from
/// perturbed parameters. With `grazing`, an extra nearly edge-on triangle
/// sits in front of the dome with one edge through a pixel center, making
/// the pose block coverage-unstable.
pub fn toy_scene(seed: u64, grazing: bool) -> Result<ToyScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut meshes = Vec::new();
    let mut kinds = Vec::new();
    let base = dome(&mut rng, 0.0);
    for i in 0..5 {
        let neutral: Vec<Vec3> = base
            .iter()
            .map(|p| p + Vec3::new(gauss(&mut rng, 0.03), gauss(&mut rng, 0.03), gauss(&mut rng, 0.06)))
            .collect();
        let expressive: Vec<Vec3> = neutral
            .iter()
            .map(|p| p + Vec3::new(gauss(&mut rng, 0.02), gauss(&mut rng, 0.02), gauss(&mut rng, 0.04)))
            .collect();
        kinds.push(SampleKind::Neutral);
        meshes.push(neutral);
        kinds.push(SampleKind::Expressive { neutral: 2 * i });
        meshes.push(expressive);
    }

    let camera = Camera::centered(16, 16, 18.0);
    let pose = RigidPose::new(
        Vec3::new(gauss(&mut rng, 0.08), gauss(&mut rng, 0.08), gauss(&mut rng, 0.08)),
        Vec3::new(gauss(&mut rng, 0.05), gauss(&mut rng, 0.05), 3.0),
    );

    let mut triangles = dome_triangles();
    let mut uv = dome_uv();
    if grazing {
        // Steep fin in camera space (normal about 86° from the view ray) whose
        // long edge passes through the center of pixel (8, 8), so any pose
        // step moves that edge across the center.
        let ray = Vec3::new(
            (8.5 - camera.principal[0]) / camera.focal,
            (8.5 - camera.principal[1]) / camera.focal,
            1.0,
        );
        let mid = ray * 2.2;
        let along = Vec3::new(0.5, 0.0, 0.15);
        let (mut a, mut b) = (mid + along, mid - along);
        let c = mid + Vec3::new(0.0, 0.06, 0.8);
        let screen = |p: &Vec3| {
            (
                camera.focal * p.x / p.z + camera.principal[0],
                camera.focal * p.y / p.z + camera.principal[1],
            )
        };
        let ((ax, ay), (bx, by), (cx, cy)) = (screen(&a), screen(&b), screen(&c));
        if edge(ax, ay, bx, by, cx, cy) > 0.0 {
            core::mem::swap(&mut a, &mut b);
        }
        let fin_cam = [a, b, c];
        let r = pose.rotation_matrix();
        let fin_model: Vec<Vec3> = fin_cam.iter().map(|p| r.transpose() * (p - pose.translation)).collect();
        let first = (GRID * GRID) as u32;
        triangles.push([first, first + 1, first + 2]);
        uv.extend([[0.5, 0.5], [0.55, 0.5], [0.5, 0.55]]);
        for m in &mut meshes {
            m.extend(fin_model.iter().copied());
        }
    }
    let samples: Vec<Mesh> = meshes
        .into_iter()
        .map(|vertices| Mesh {
            vertices,
            triangles: triangles.clone(),
            uv: uv.clone(),
        })
        .collect();
    let model = build_from_samples(&samples, &kinds, 3, 2, vec![0, 1, 2])?;

    let mut lighting = ShLighting::directional(0.55, 0.35, Vec3::new(0.3, 0.4, 1.0));
    for row in &mut lighting.gamma {
        for g in row.iter_mut().skip(4) {
            *g += gauss(&mut rng, 0.05);
        }
    }
    let coeffs = ShapeCoeffs {
        shape: (0..3).map(|j| gauss(&mut rng, 0.5) * model.shape_sigmas[j] as f64).collect(),
        expr: (0..2).map(|j| gauss(&mut rng, 0.5) * model.expr_sigmas[j] as f64).collect(),
    };
    let params = FaceParams {
        coeffs,
        pose,
        camera,
        lighting,
    };
    let texture = smooth_texture(&mut rng, 8);

    let mut target_params = params.clone();
    target_params.pose.rotation += Vec3::new(0.02, -0.015, 0.01);
    target_params.lighting = target_params.lighting.scaled(1.08);
    for s in &mut target_params.coeffs.shape {
        *s *= 0.7;
    }
    let target_texture = smooth_texture(&mut rng, 8);
    let target_scene = Scene {
        model: &model,
        texture: target_texture,
        params: target_params,
    };
    let target = target_scene.render()?.image;
    let mask = Scene {
        model: &model,
        texture: texture.clone(),
        params: params.clone(),
    }
    .render()?
    .mask;
    Ok(ToyScene {
        model,
        texture,
        params,
        target,
        mask,
    })
}
