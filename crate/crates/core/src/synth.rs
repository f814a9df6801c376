//! Synthetic face corpus: sampled parameters, procedural textures and
//! ground-truth renders over flat or gradient backdrops.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[allow(unused_imports)]
use crate::float::Float;
use crate::camera::{Camera, RigidPose};
use crate::error::{Error, Result};
use crate::fitting::{FaceParams, Landmarks2D};
use crate::image::{Image, Mask};
use crate::mesh::Vec3;
use crate::model::{MorphableModel, ShapeCoeffs};
use crate::par;
use crate::shading::{Rendered, ShLighting, SH_C0};
use crate::template::{HeadTemplate, MOUTH_LAT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LightingMode {
    Constant,
    /// DC irradiance uniform in `[dc_floor, dc_ceil]`; bands 1-8 Gaussian
    /// with standard deviation `band_sigma` (in irradiance units).
    RandomSh {
        dc_floor: f64,
        dc_ceil: f64,
        band_sigma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureSpec {
    pub size: usize,
    /// Skin tone is interpolated between a light and a dark palette entry
    /// by a value drawn from this range.
    pub tone: (f64, f64),
    pub noise_amplitude: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec {
            size: 256,
            tone: (0.0, 1.0),
            noise_amplitude: 0.08,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backdrop {
    Flat([f64; 3]),
    /// Vertical blend from the top row to the bottom row.
    Gradient { top: [f64; 3], bottom: [f64; 3] },
}

impl Backdrop {
    pub fn image(&self, width: usize, height: usize) -> Image {
        Image::from_fn(width, height, 3, |_, y, c| match self {
            Backdrop::Flat(rgb) => rgb[c],
            Backdrop::Gradient { top, bottom } => {
                let t = if height > 1 { y as f64 / (height - 1) as f64 } else { 0.0 };
                top[c] + t * (bottom[c] - top[c])
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpec {
    pub seed: u64,
    pub count: usize,
    /// Degrees, inclusive ranges.
    pub yaw: (f64, f64),
    pub pitch: (f64, f64),
    pub roll: (f64, f64),
    /// Coefficients are N(0, σ²) truncated to `±coeff_range·σ`.
    pub coeff_range: f64,
    pub lighting: LightingMode,
    pub texture: TextureSpec,
    pub width: usize,
    pub height: usize,
    /// Focal length as a multiple of the image width.
    pub focal_factor: f64,
    pub depth: f64,
    pub backdrop: Backdrop,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            seed: 0,
            count: 1,
            yaw: (-30.0, 30.0),
            pitch: (-10.0, 10.0),
            roll: (-5.0, 5.0),
            coeff_range: 2.0,
            lighting: LightingMode::RandomSh {
                dc_floor: 0.7,
                dc_ceil: 1.0,
                band_sigma: 0.15,
            },
            texture: TextureSpec::default(),
            width: 128,
            height: 128,
            focal_factor: DEFAULT_FOCAL_FACTOR,
            depth: DEFAULT_DEPTH,
            backdrop: Backdrop::Gradient {
                top: [0.25, 0.3, 0.38],
                bottom: [0.1, 0.12, 0.15],
            },
        }
    }
}

/// Camera distance and focal (× width) that frame the default head.
pub const DEFAULT_DEPTH: f64 = 5.0;
pub const DEFAULT_FOCAL_FACTOR: f64 = 2.0;

/// Default camera for a `width × height` image.
pub fn default_camera(width: usize, height: usize) -> Camera {
    Camera::centered(width, height, DEFAULT_FOCAL_FACTOR * width as f64)
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, r: (f64, f64)| {
            if r.0 <= r.1 && r.0.is_finite() && r.1.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} range {:?} is not ordered", r)))
            }
        };
        ordered("yaw", self.yaw)?;
        ordered("pitch", self.pitch)?;
        ordered("roll", self.roll)?;
        ordered("texture tone", self.texture.tone)?;
        if let LightingMode::RandomSh { dc_floor, dc_ceil, band_sigma } = self.lighting {
            ordered("DC lighting", (dc_floor, dc_ceil))?;
            if !(band_sigma >= 0.0) {
                return Err(Error::InvalidInput("band sigma must be non-negative".into()));
            }
        }
        if self.count == 0 {
            return Err(Error::InvalidInput("sample count must be at least 1".into()));
        }
        if !(self.coeff_range >= 0.0) {
            return Err(Error::InvalidInput("coefficient range must be non-negative".into()));
        }
        if self.texture.size == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image and texture sizes must be non-zero".into()));
        }
        if !(self.focal_factor > 0.0 && self.depth > 0.0) {
            return Err(Error::InvalidInput("focal factor and depth must be positive".into()));
        }
        Ok(())
    }

    pub fn camera(&self) -> Camera {
        Camera::centered(self.width, self.height, self.focal_factor * self.width as f64)
    }

    /// Seed of item `i`, so each item can be regenerated on its own.
    pub fn item_seed(&self, i: usize) -> u64 {
        let mut z = self.seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..=r.1)
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    if bound == 0.0 {
        return 0.0;
    }
    for _ in 0..64 {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= bound {
            return z;
        }
    }
    rng.random_range(-bound..=bound)
}

fn sample_lighting(rng: &mut ChaCha8Rng, mode: LightingMode) -> ShLighting {
    match mode {
        LightingMode::Constant => ShLighting::constant(1.0),
        LightingMode::RandomSh {
            dc_floor,
            dc_ceil,
            band_sigma,
        } => {
            let level = uniform(rng, (dc_floor, dc_ceil));
            let mut gamma = [[0.0; 9]; 3];
            let shared: [f64; 8] = core::array::from_fn(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * band_sigma
            });
            for row in &mut gamma {
                let tint = uniform(rng, (0.95, 1.05));
                row[0] = level * tint / SH_C0;
                for b in 1..9 {
                    let z: f64 = StandardNormal.sample(rng);
                    row[b] = (shared[b - 1] + 0.2 * band_sigma * z) / SH_C0;
                }
            }
            ShLighting { gamma }
        }
    }
}

fn sample_one(spec: &SampleSpec, model: &MorphableModel, rng: &mut ChaCha8Rng) -> FaceParams {
    let shape = model
        .shape_sigmas
        .iter()
        .map(|&s| truncated_normal(rng, spec.coeff_range) * s as f64)
        .collect();
    let expr = model
        .expr_sigmas
        .iter()
        .map(|&s| truncated_normal(rng, spec.coeff_range) * s as f64)
        .collect();
    let yaw = uniform(rng, spec.yaw).to_radians();
    let pitch = uniform(rng, spec.pitch).to_radians();
    let roll = uniform(rng, spec.roll).to_radians();
    let lighting = sample_lighting(rng, spec.lighting);
    FaceParams {
        coeffs: ShapeCoeffs { shape, expr },
        pose: RigidPose::from_euler(yaw, pitch, roll, Vec3::new(0.0, 0.0, spec.depth)),
        camera: spec.camera(),
        lighting,
    }
}

/// `spec.count` parameter sets, each drawn from its own item seed.
pub fn sample_params(spec: &SampleSpec, model: &MorphableModel) -> Result<Vec<FaceParams>> {
    spec.validate()?;
    Ok(par::map_indexed(spec.count, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.item_seed(i));
        sample_one(spec, model, &mut rng)
    }))
}

/// Texture seed of item `i`, independent of the parameter stream.
pub fn texture_seed(spec: &SampleSpec, i: usize) -> u64 {
    spec.item_seed(i) ^ 0x5445_5854_5552_4531
}

/// Smooth lattice noise in [-1, 1] with `cells × cells` cells.
struct ValueNoise {
    cells: usize,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, cells: usize) -> Self {
        let values = (0..(cells + 1) * (cells + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        ValueNoise { cells, values }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let n = self.cells;
        let fx = (u.clamp(0.0, 1.0) * n as f64).min(n as f64 - 1e-9);
        let fy = (v.clamp(0.0, 1.0) * n as f64).min(n as f64 - 1e-9);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (s(fx - x0 as f64), s(fy - y0 as f64));
        let g = |x: usize, y: usize| self.values[y * (n + 1) + x];
        let top = g(x0, y0) + tx * (g(x0 + 1, y0) - g(x0, y0));
        let bottom = g(x0, y0 + 1) + tx * (g(x0 + 1, y0 + 1) - g(x0, y0 + 1));
        top + ty * (bottom - top)
    }
}

const LIGHT_SKIN: [f64; 3] = [0.87, 0.7, 0.6];
const DARK_SKIN: [f64; 3] = [0.42, 0.28, 0.2];
const LIP: [f64; 3] = [0.62, 0.25, 0.25];
const EYE: [f64; 3] = [0.12, 0.1, 0.09];
const BROW: [f64; 3] = [0.22, 0.16, 0.12];

fn blob(lon: f64, lat: f64, c: (f64, f64), s: (f64, f64)) -> f64 {
    let a = (lon - c.0) / s.0;
    let b = (lat - c.1) / s.1;
    (-0.5 * (a * a + b * b)).exp()
}

/// Skin-tone albedo with multi-scale noise and darker lips, eyes and brows
/// placed at their template UV positions.
pub fn procedural_texture(spec: &TextureSpec, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = uniform(&mut rng, spec.tone);
    let base: [f64; 3] = core::array::from_fn(|c| LIGHT_SKIN[c] + t * (DARK_SKIN[c] - LIGHT_SKIN[c]));
    let octaves: Vec<(ValueNoise, f64)> = [4usize, 8, 16, 32]
        .iter()
        .enumerate()
        .map(|(k, &cells)| (ValueNoise::new(&mut rng, cells), 0.5f64.powi(k as i32)))
        .collect();
    let tint: Vec<ValueNoise> = (0..3).map(|_| ValueNoise::new(&mut rng, 6)).collect();
    let lip_shift = rng.random_range(-0.1..0.1);
    let tmpl = HeadTemplate::default();
    let size = spec.size;
    Image::from_fn(size, size, 3, |x, y, c| {
        let u = (x as f64 + 0.5) / size as f64;
        let v = 1.0 - (y as f64 + 0.5) / size as f64;
        let lon = (2.0 * u - 1.0) * tmpl.lon_extent;
        let lat = (2.0 * v - 1.0) * tmpl.lat_extent;
        let mut n = 0.0;
        for (o, amp) in &octaves {
            n += amp * o.at(u, v);
        }
        let mut col = base[c] * (1.0 + spec.noise_amplitude * (n + 0.5 * tint[c].at(u, v)));
        let lips = blob(lon, lat, (0.0, MOUTH_LAT), (0.17, 0.045));
        let eyes = blob(lon.abs(), lat, (0.3, 0.26), (0.07, 0.035));
        let brows = blob(lon.abs(), lat, (0.28, 0.41), (0.13, 0.025));
        col += lips * (LIP[c] * (1.0 + lip_shift) - col);
        col += 0.85 * eyes * (EYE[c] - col);
        col += 0.7 * brows * (BROW[c] - col);
        col.clamp(0.0, 1.0)
    })
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Face rendered over the backdrop.
    pub image: Image,
    /// Rasterizer coverage.
    pub mask: Mask,
    pub params: FaceParams,
    pub texture: Image,
    /// Exact projections of the template landmark vertices.
    pub landmarks: Landmarks2D,
    pub rendered: Rendered,
}

/// Renders `params` with `texture` over `backdrop`.
pub fn generate_ground_truth(
    params: &FaceParams,
    model: &MorphableModel,
    texture: &Image,
    backdrop: &Backdrop,
) -> Result<GroundTruth> {
    let rendered = crate::diffrender::Scene {
        model,
        texture: texture.clone(),
        params: params.clone(),
    }
    .render()?;
    let cam = &params.camera;
    let mut image = backdrop.image(cam.width, cam.height);
    for (i, &m) in rendered.mask.data.iter().enumerate() {
        if m {
            image.pixel_mut(i).copy_from_slice(rendered.image.pixel(i));
        }
    }
    let landmark_ids: Vec<u32> = if model.num_vertices == HeadTemplate::default().num_vertices() {
        HeadTemplate::default().landmark_vertices()
    } else {
        Vec::new()
    };
    Ok(GroundTruth {
        image,
        mask: rendered.mask.clone(),
        params: params.clone(),
        texture: texture.clone(),
        landmarks: Landmarks2D::from_projection(&rendered.projection.screen, &landmark_ids),
        rendered,
    })
}

/// Parameters, texture and ground truth for item `i` of a spec.
pub fn generate_item(spec: &SampleSpec, model: &MorphableModel, i: usize) -> Result<GroundTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.item_seed(i));
    let params = sample_one(spec, model, &mut rng);
    let texture = procedural_texture(&spec.texture, texture_seed(spec, i));
    generate_ground_truth(&params, model, &texture, &spec.backdrop)
}
