//! Paired synthetic experiments behind `ablate` and the acceptance harness.
//! Each returns its measurements; [`Report`] turns them into pass/fail lines.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texmorph_core::camera::geodesic_angle;
use texmorph_core::compositor::{composite, effective_mask, mouth_mask};
use texmorph_core::fitting::{fit, FitOptions};
use texmorph_core::metrics::{l1, psnr, ssim_masked};
use texmorph_core::synth::{generate_ground_truth, generate_item, GroundTruth, SampleSpec, TextureSpec};
use texmorph_core::template::default_model;
use texmorph_core::texrecover::{front_hemisphere, recover, RecoverOptions, RecoveredTexture};
use texmorph_core::{FaceParams, Image, Mask, MorphableModel, RigidPose, ShLighting};

use crate::error::Result;

/// Identities, shape and expression components and seed of the model the
/// experiments run on.
pub const REFERENCE_MODEL: (usize, usize, usize, u64) = (40, 20, 8, 7);

pub fn reference_model() -> Result<MorphableModel> {
    let (n, ks, ke, seed) = REFERENCE_MODEL;
    Ok(default_model(n, ks, ke, seed)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    AtLeast,
    AtMost,
    Above,
}

impl Comparison {
    fn symbol(self) -> &'static str {
        match self {
            Comparison::AtLeast => ">=",
            Comparison::AtMost => "<=",
            Comparison::Above => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub comparison: Comparison,
}

impl Check {
    fn new(name: &str, measured: f64, comparison: Comparison, bound: f64) -> Self {
        Check { name: name.into(), measured, bound, comparison }
    }

    pub fn at_least(name: &str, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, Comparison::AtLeast, bound)
    }

    pub fn at_most(name: &str, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, Comparison::AtMost, bound)
    }

    pub fn above(name: &str, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, Comparison::Above, bound)
    }

    pub fn passed(&self) -> bool {
        match self.comparison {
            Comparison::AtLeast => self.measured >= self.bound,
            Comparison::AtMost => self.measured <= self.bound,
            Comparison::Above => self.measured > self.bound,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
    /// Extra measurements printed after the checks.
    pub notes: Vec<(String, f64)>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let op = c.comparison.symbol();
            let verdict = if c.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{verdict} {}: {:.6} (required {op} {})", c.name, c.measured, c.bound);
        }
        for (k, v) in &self.notes {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "result={}", if self.passed() { "pass" } else { "fail" });
        s
    }
}

/// A frontal 256×256 view of a random face with a 256×256 texture.
pub fn frontal_view(model: &MorphableModel, seed: u64) -> Result<(GroundTruth, SampleSpec)> {
    let spec = SampleSpec {
        seed,
        yaw: (0.0, 0.0),
        pitch: (0.0, 0.0),
        roll: (0.0, 0.0),
        coeff_range: 1.0,
        width: 256,
        height: 256,
        texture: TextureSpec { size: 256, ..Default::default() },
        ..Default::default()
    };
    Ok((generate_item(&spec, model, 0)?, spec))
}

fn valid_clamped(r: &RecoveredTexture) -> Image {
    let mut t = r.texture.clone();
    t.clamp01();
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureRoundTrip {
    /// SSIM over texels seen by the frontal view.
    pub frontal_ssim: f64,
    pub front_texels: usize,
    /// Fractions of the front hemisphere with non-zero validity.
    pub frontal_coverage: f64,
    pub multi_coverage: f64,
}

pub const ROTATION_YAWS: [f64; 3] = [-45.0, 0.0, 45.0];

/// Recovers the texture of one face from a frontal view and from three views
/// at [`ROTATION_YAWS`].
pub fn texture_round_trip(model: &MorphableModel, seed: u64, opts: &RecoverOptions) -> Result<TextureRoundTrip> {
    let (gt, spec) = frontal_view(model, seed)?;
    let size = gt.texture.width;
    let frontal = recover(&[(gt.image.clone(), gt.params.clone())], model, size, opts)?;
    let seen = frontal.valid_mask();
    let frontal_ssim = ssim_masked(&valid_clamped(&frontal), &gt.texture, &seen)?;
    let mut views = Vec::new();
    for yaw in ROTATION_YAWS {
        let mut p = gt.params.clone();
        p.pose = RigidPose::from_euler(yaw.to_radians(), 0.0, 0.0, p.pose.translation);
        views.push((generate_ground_truth(&p, model, &gt.texture, &spec.backdrop)?.image, p));
    }
    let multi = recover(&views, model, size, opts)?;
    let front = front_hemisphere(model, &gt.params.coeffs, size)?;
    let cover = |m: &Mask| m.and(&front).count() as f64 / front.count() as f64;
    Ok(TextureRoundTrip {
        frontal_ssim,
        front_texels: front.count(),
        frontal_coverage: cover(&seen),
        multi_coverage: cover(&multi.valid_mask()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Disentanglement {
    pub l1_known_lighting: f64,
    pub l1_constant_lighting: f64,
}

impl Disentanglement {
    pub fn ratio(&self) -> f64 {
        self.l1_constant_lighting / self.l1_known_lighting
    }
}

/// Albedo error over seen texels when recovering with the true non-uniform
/// lighting versus with lighting forced to constant-unit.
pub fn disentanglement(model: &MorphableModel, seed: u64, opts: &RecoverOptions) -> Result<Disentanglement> {
    let (gt, _) = frontal_view(model, seed)?;
    let size = gt.texture.width;
    let known = recover(&[(gt.image.clone(), gt.params.clone())], model, size, opts)?;
    let flat = FaceParams { lighting: ShLighting::constant(1.0), ..gt.params.clone() };
    let baked = recover(&[(gt.image.clone(), flat)], model, size, opts)?;
    let seen = known.valid_mask();
    Ok(Disentanglement {
        l1_known_lighting: l1(&valid_clamped(&known), &gt.texture, Some(&seen))?,
        l1_constant_lighting: l1(&valid_clamped(&baked), &gt.texture, Some(&seen))?,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MouthContract {
    pub composites: usize,
    /// Composites whose mouth mask is non-empty.
    pub open_mouths: usize,
    pub mouth_pixels: usize,
    /// Pixels outside the effective mask that differ from the background.
    pub outside_violations: usize,
    /// Mouth pixels that differ from the background.
    pub mouth_violations: usize,
}

/// Composites `count` random faces over random-noise backgrounds.
pub fn mouth_contract(model: &MorphableModel, count: usize, seed: u64) -> Result<MouthContract> {
    let spec = SampleSpec {
        seed,
        count,
        width: 96,
        height: 96,
        coeff_range: 2.5,
        texture: TextureSpec { size: 64, ..Default::default() },
        ..Default::default()
    };
    let mut out = MouthContract { composites: count, ..Default::default() };
    for i in 0..count {
        let gt = generate_item(&spec, model, i)?;
        let cam = &gt.params.camera;
        let mouth = mouth_mask(&gt.rendered.projection.screen, &model.mouth_loop, cam)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.item_seed(i) ^ 0xB6);
        let bg = Image::from_fn(cam.width, cam.height, 3, |_, _, _| rng.random_range(0.0..1.0));
        let feather = rng.random_range(0..4usize);
        let out_img = composite(&gt.rendered.image, &gt.mask, &mouth.mask, &bg, feather)?;
        let eff = effective_mask(&gt.mask, &mouth.mask)?;
        if !mouth.mask.is_empty() {
            out.open_mouths += 1;
        }
        for p in 0..cam.width * cam.height {
            let same = out_img.pixel(p) == bg.pixel(p);
            if mouth.mask.data[p] {
                out.mouth_pixels += 1;
                out.mouth_violations += usize::from(!same);
            } else if !eff.data[p] {
                out.outside_violations += usize::from(!same);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitCase {
    /// PSNR of the fitted render over the fit's own loss mask (coverage
    /// eroded by `mask_erosion`).
    pub photometric_psnr: f64,
    /// PSNR of the composited fit over the union of both silhouettes.
    pub union_psnr: f64,
    pub initial_pose_error_deg: f64,
    pub pose_error_deg: f64,
    /// Optimizer updates.
    pub iterations: usize,
}

/// Perturbs the true parameters of target `i`: pose by up to ±5° about each
/// axis, coefficients by up to ±0.5σ, lighting reset to a constant.
pub fn perturbed_init(model: &MorphableModel, truth: &FaceParams, i: usize) -> FaceParams {
    let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
    let mut init = truth.clone();
    let mut d = || rng.random_range(-5.0f64..5.0).to_radians();
    let dp = RigidPose::from_euler(d(), d(), d(), init.pose.translation);
    let r = dp.rotation_matrix() * init.pose.rotation_matrix();
    init.pose.rotation = nalgebra::Rotation3::from_matrix_unchecked(r).scaled_axis();
    for (c, s) in init.coeffs.shape.iter_mut().zip(&model.shape_sigmas) {
        *c += rng.random_range(-0.5..0.5) * *s as f64;
    }
    for (c, s) in init.coeffs.expr.iter_mut().zip(&model.expr_sigmas) {
        *c += rng.random_range(-0.5..0.5) * *s as f64;
    }
    init.lighting = ShLighting::constant(0.85);
    init
}

/// The fitting-round-trip target spec: 128×128 faces with default pose,
/// shape and lighting ranges.
pub fn fit_targets_spec(count: usize) -> SampleSpec {
    SampleSpec {
        seed: 100,
        count,
        ..Default::default()
    }
}

/// Fits target `i` of [`fit_targets_spec`] from [`perturbed_init`].
pub fn fit_round_trip(model: &MorphableModel, i: usize, opts: &FitOptions) -> Result<FitCase> {
    let spec = fit_targets_spec(i + 1);
    let gt = generate_item(&spec, model, i)?;
    let init = perturbed_init(model, &gt.params, i);
    let res = fit(&gt.image, model, &gt.texture, &init, Some(&gt.landmarks), opts)?;
    let fitted = generate_ground_truth(&res.params, model, &gt.texture, &spec.backdrop)?;
    let loss_mask = fitted.mask.eroded(opts.mask_erosion);
    let angle = |p: &FaceParams| geodesic_angle(&p.pose.rotation, &gt.params.pose.rotation).to_degrees();
    Ok(FitCase {
        photometric_psnr: psnr(&fitted.rendered.image, &gt.image, Some(&loss_mask))?.db,
        union_psnr: psnr(&fitted.image, &gt.image, Some(&gt.mask.or(&fitted.mask)))?.db,
        initial_pose_error_deg: angle(&init),
        pose_error_deg: angle(&res.params),
        iterations: res.trace.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_text() {
        let r = Report {
            checks: vec![Check::at_least("a", 2.0, 1.0), Check::at_most("b", 2.0, 1.0), Check::above("c", 1.0, 1.0)],
            notes: vec![("x".into(), 0.5)],
        };
        assert!(!r.passed());
        let t = r.to_text();
        assert!(t.contains("PASS a: 2.000000 (required >= 1)"));
        assert!(t.contains("FAIL b"));
        assert!(t.contains("FAIL c: 1.000000 (required > 1)"));
        assert!(t.ends_with("x=0.5\nresult=fail\n"));
    }
}
