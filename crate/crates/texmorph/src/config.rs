//! TOML configuration. Every field is optional; a value given on the command
//! line wins over the file, which wins over the built-in default.
//!
//! ```toml
//! [fit]
//! lr = 0.02
//! joint_iterations = 400
//! w_reg = 1e-3
//!
//! [recover]
//! lambda_tv = 1e-4
//! inpaint_iterations = 2000
//!
//! [composite]
//! feather = 2
//! ```
//!
//! A sample spec file (`sample --spec`) uses the keys of [`SpecFile`] at
//! top level.

use std::path::Path;

use serde::Deserialize;
use texmorph_core::fitting::FitOptions;
use texmorph_core::synth::{Backdrop, LightingMode, SampleSpec, TextureSpec};
use texmorph_core::texrecover::RecoverOptions;

use crate::error::{read_text, Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub recover: RecoverSection,
    #[serde(default)]
    pub composite: CompositeSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub lr: Option<f64>,
    pub landmark_iterations: Option<usize>,
    pub joint_iterations: Option<usize>,
    pub final_lr_ratio: Option<f64>,
    pub w_photo: Option<f64>,
    pub w_lm: Option<f64>,
    pub w_reg: Option<f64>,
    pub optimize_texture: Option<bool>,
    pub optimize_focal: Option<bool>,
    pub lighting_init: Option<bool>,
    pub mask_erosion: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverSection {
    pub iterations: Option<usize>,
    pub cg_iterations: Option<usize>,
    pub lambda_tv: Option<f64>,
    pub tv_epsilon: Option<f64>,
    pub facing_threshold: Option<f64>,
    pub inpaint_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeSection {
    pub feather: Option<usize>,
}

pub const DEFAULT_INPAINT_ITERATIONS: usize = 2000;

fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *slot = v.clone();
    }
}

impl Config {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Config::default()),
            Some(p) => Config::parse(&read_text(p)?).map_err(|m| Error::format(p, m)),
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        let mut o = FitOptions::default();
        let f = &self.fit;
        set(&mut o.adam.lr, &f.lr);
        set(&mut o.landmark_iterations, &f.landmark_iterations);
        set(&mut o.joint_iterations, &f.joint_iterations);
        set(&mut o.final_lr_ratio, &f.final_lr_ratio);
        set(&mut o.w_photo, &f.w_photo);
        set(&mut o.w_lm, &f.w_lm);
        set(&mut o.w_reg, &f.w_reg);
        set(&mut o.optimize_texture, &f.optimize_texture);
        set(&mut o.optimize_focal, &f.optimize_focal);
        set(&mut o.lighting_init, &f.lighting_init);
        set(&mut o.mask_erosion, &f.mask_erosion);
        o
    }

    pub fn recover_options(&self) -> RecoverOptions {
        let mut o = RecoverOptions::default();
        let r = &self.recover;
        set(&mut o.iterations, &r.iterations);
        set(&mut o.cg_iterations, &r.cg_iterations);
        set(&mut o.lambda_tv, &r.lambda_tv);
        set(&mut o.tv_epsilon, &r.tv_epsilon);
        set(&mut o.facing_threshold, &r.facing_threshold);
        o
    }

    pub fn inpaint_iterations(&self) -> usize {
        self.recover.inpaint_iterations.unwrap_or(DEFAULT_INPAINT_ITERATIONS)
    }
}

/// Sample spec file. Ranges are `[lo, hi]`, angles in degrees.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub yaw: Option<(f64, f64)>,
    pub pitch: Option<(f64, f64)>,
    pub roll: Option<(f64, f64)>,
    /// Coefficients are drawn uniformly in `±coeff_range · sigma`.
    pub coeff_range: Option<f64>,
    /// `"constant"` or `"random"`.
    pub lighting: Option<String>,
    pub dc_floor: Option<f64>,
    pub dc_ceil: Option<f64>,
    pub band_sigma: Option<f64>,
    pub texture_size: Option<usize>,
    pub tone: Option<(f64, f64)>,
    pub noise_amplitude: Option<f64>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub focal_factor: Option<f64>,
    pub depth: Option<f64>,
    /// Flat backdrop color; overrides the gradient keys.
    pub backdrop: Option<[f64; 3]>,
    pub backdrop_top: Option<[f64; 3]>,
    pub backdrop_bottom: Option<[f64; 3]>,
}

impl SpecFile {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        SpecFile::parse(&read_text(path)?).map_err(|m| Error::format(path, m))
    }

    pub fn to_spec(&self) -> std::result::Result<SampleSpec, String> {
        let mut s = SampleSpec::default();
        set(&mut s.seed, &self.seed);
        set(&mut s.count, &self.count);
        set(&mut s.yaw, &self.yaw);
        set(&mut s.pitch, &self.pitch);
        set(&mut s.roll, &self.roll);
        set(&mut s.coeff_range, &self.coeff_range);
        set(&mut s.width, &self.width);
        set(&mut s.height, &self.height);
        set(&mut s.focal_factor, &self.focal_factor);
        set(&mut s.depth, &self.depth);
        let mut tex = TextureSpec::default();
        set(&mut tex.size, &self.texture_size);
        set(&mut tex.tone, &self.tone);
        set(&mut tex.noise_amplitude, &self.noise_amplitude);
        s.texture = tex;
        match self.lighting.as_deref() {
            None | Some("random") => {
                if let LightingMode::RandomSh {
                    dc_floor,
                    dc_ceil,
                    band_sigma,
                } = &mut s.lighting
                {
                    set(dc_floor, &self.dc_floor);
                    set(dc_ceil, &self.dc_ceil);
                    set(band_sigma, &self.band_sigma);
                }
            }
            Some("constant") => s.lighting = LightingMode::Constant,
            Some(other) => return Err(format!("unknown lighting mode `{other}` (constant | random)")),
        }
        if let Some(c) = self.backdrop {
            s.backdrop = Backdrop::Flat(c);
        } else if let Backdrop::Gradient { top, bottom } = &mut s.backdrop {
            set(top, &self.backdrop_top);
            set(bottom, &self.backdrop_bottom);
        }
        s.validate().map_err(|e| e.to_string())?;
        Ok(s)
    }
}

/// `key = value` lines describing a spec, for corpus manifests.
pub fn spec_summary(s: &SampleSpec) -> String {
    let lighting = match s.lighting {
        LightingMode::Constant => "constant".to_string(),
        LightingMode::RandomSh {
            dc_floor,
            dc_ceil,
            band_sigma,
        } => format!("random dc=[{dc_floor:?}, {dc_ceil:?}] band_sigma={band_sigma:?}"),
    };
    let backdrop = match s.backdrop {
        Backdrop::Flat(c) => format!("flat {c:?}"),
        Backdrop::Gradient { top, bottom } => format!("gradient {top:?} -> {bottom:?}"),
    };
    format!(
        "seed = {}\ncount = {}\nyaw = {:?}\npitch = {:?}\nroll = {:?}\ncoeff_range = {:?}\nlighting = {lighting}\n\
         texture = size {} tone {:?} noise {:?}\nimage = {}x{}\nfocal_factor = {:?}\ndepth = {:?}\nbackdrop = {backdrop}\n",
        s.seed,
        s.count,
        s.yaw,
        s.pitch,
        s.roll,
        s.coeff_range,
        s.texture.size,
        s.texture.tone,
        s.texture.noise_amplitude,
        s.width,
        s.height,
        s.focal_factor,
        s.depth,
    )
}
