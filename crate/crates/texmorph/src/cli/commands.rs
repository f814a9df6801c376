use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use texmorph_core::compositor::mouth_mask;
use texmorph_core::diffrender::{gradcheck, toy_scene, GradcheckOptions};
use texmorph_core::fitting::{fit, FitOptions, Landmarks2D};
use texmorph_core::metrics::{l1, psnr, ssim, ssim_masked};
use texmorph_core::synth::{default_camera, generate_item, texture_seed, DEFAULT_DEPTH};
use texmorph_core::template::{training_samples, HeadTemplate};
use texmorph_core::texrecover::{inpaint_invalid, recover, relight};
use texmorph_core::{build_from_samples, FaceParams, Image, SampleKind, ShLighting, Vec3};

use super::*;
use crate::config::{spec_summary, SpecFile};
use crate::experiments::{self, Check, Report};
use crate::io;

/// Runs `cmd`, returning its outcome and report text.
pub(super) fn dispatch(ctx: &Context, cmd: &Command) -> Result<(Outcome, String)> {
    let mut text = String::new();
    let outcome = match cmd {
        Command::Template(a) => template(ctx, a, &mut text),
        Command::BuildModel(a) => build_model(ctx, a, &mut text),
        Command::Render(a) => render(a, &mut text),
        Command::Sample(a) => sample(ctx, a, &mut text),
        Command::Fit(a) => fit_cmd(ctx, a, &mut text),
        Command::Reconstruct(a) => reconstruct(ctx, a, &mut text),
        Command::Composite(a) => composite(ctx, a, &mut text),
        Command::Ablate(a) => ablate(ctx, a, &mut text),
        Command::Gradcheck(a) => gradcheck_cmd(ctx, a, &mut text),
        Command::Metrics(a) => metrics(a, &mut text),
    }?;
    Ok((outcome, text))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `path` with `suffix` appended to its file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn template(ctx: &Context, a: &TemplateArgs, text: &mut String) -> Result<Outcome> {
    create_dir(&a.out)?;
    let t = HeadTemplate::default();
    let (meshes, kinds) = training_samples(&t, a.identities, ctx.seed.unwrap_or(0));
    let names: Vec<String> = kinds
        .iter()
        .enumerate()
        .map(|(i, k)| match k {
            SampleKind::Neutral => format!("id{:03}_neutral.obj", i / 2),
            SampleKind::Expressive { .. } => format!("id{:03}_expression.obj", i / 2),
        })
        .collect();
    meshes
        .par_iter()
        .zip(&names)
        .try_for_each(|(m, n)| io::save_obj(m, &a.out.join(n)))?;
    let mut labels = String::new();
    for (n, k) in names.iter().zip(&kinds) {
        if let SampleKind::Expressive { neutral } = k {
            let _ = writeln!(labels, "{n} expressive {}", names[*neutral]);
        }
    }
    crate::error::write_text(&a.out.join("labels.txt"), &labels)?;
    let mouth: String = t.mouth_loop().iter().map(|i| format!("{i}\n")).collect();
    crate::error::write_text(&a.out.join("mouth.txt"), &mouth)?;
    let _ = writeln!(text, "meshes={} vertices={} triangles={}", meshes.len(), t.num_vertices(), t.triangles().len());
    Ok(Outcome::Ok)
}

/// Meshes of a sample directory in file-name order with their labels.
fn read_samples(dir: &Path) -> Result<(Vec<texmorph_core::Mesh>, Vec<SampleKind>)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "obj"))
        .collect();
    files.sort();
    let name = |p: &Path| p.file_name().unwrap_or_default().to_string_lossy().into_owned();
    let index: HashMap<String, usize> = files.iter().enumerate().map(|(i, p)| (name(p), i)).collect();
    let mut kinds = vec![SampleKind::Neutral; files.len()];
    let labels = dir.join("labels.txt");
    if labels.exists() {
        let body = crate::error::read_text(&labels)?;
        for (n, line) in body.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = |m: String| Error::format(&labels, format!("line {}: {m}", n + 1));
            let lookup = |f: &str| index.get(f).copied().ok_or_else(|| bad(format!("no mesh named `{f}`")));
            match parts.as_slice() {
                [file, "neutral"] => kinds[lookup(file)?] = SampleKind::Neutral,
                [file, "expressive", base] => kinds[lookup(file)?] = SampleKind::Expressive { neutral: lookup(base)? },
                _ => return Err(bad("expected `file neutral` or `file expressive neutral-file`".into())),
            }
        }
    }
    let meshes = files.par_iter().map(|p| io::load_obj(p)).collect::<Result<Vec<_>>>()?;
    Ok((meshes, kinds))
}

fn build_model(ctx: &Context, a: &BuildModelArgs, text: &mut String) -> Result<Outcome> {
    let (meshes, kinds, mouth) = if a.procedural {
        let t = HeadTemplate::default();
        let (m, k) = training_samples(&t, a.identities, ctx.seed.unwrap_or(0));
        let mouth = match &a.mouth {
            Some(p) => io::load_mouth_loop(p)?,
            None => t.mouth_loop(),
        };
        (m, k, mouth)
    } else {
        let dir = a.samples.as_ref().expect("clap requires --samples");
        let (m, k) = read_samples(dir)?;
        let mouth = io::load_mouth_loop(a.mouth.as_ref().expect("clap requires --mouth"))?;
        (m, k, mouth)
    };
    let model = build_from_samples(&meshes, &kinds, a.ks, a.ke, mouth)?;
    io::save_model(&model, &a.out)?;
    let _ = writeln!(
        text,
        "samples={} vertices={} triangles={} k_shape={} k_expr={} mouth_loop={}",
        meshes.len(),
        model.num_vertices,
        model.triangles.len(),
        model.k_shape(),
        model.k_expr(),
        model.mouth_loop.len()
    );
    Ok(Outcome::Ok)
}

fn render(a: &RenderArgs, text: &mut String) -> Result<Outcome> {
    let model = io::load_model(&a.model)?;
    let mut params = io::load_params(&a.params)?;
    if let Some(l) = &a.light {
        params.lighting = io::load_lighting(l)?;
    }
    let texture = io::load_image(&a.texture)?;
    let r = texmorph_core::render_illuminated(&model, &params.coeffs, &params.pose, &params.camera, &texture, &params.lighting)?;
    io::save_image(&r.image, &a.out)?;
    let mask_path = a.mask.clone().unwrap_or_else(|| sibling(&a.out, ".mask.png"));
    io::save_mask(&r.mask, &mask_path)?;
    let mouth = mouth_mask(&r.projection.screen, &model.mouth_loop, &params.camera)?;
    io::save_mask(&mouth.mask, &sibling(&a.out, ".mouth.png"))?;
    let _ = writeln!(text, "covered_pixels={} mouth_pixels={}", r.mask.count(), mouth.mask.count());
    if mouth.flags.hull_fallback {
        let _ = writeln!(text, "mouth_hull_fallback=1");
    }
    Ok(Outcome::Ok)
}

fn sample(ctx: &Context, a: &SampleArgs, text: &mut String) -> Result<Outcome> {
    let model = io::load_model(&a.model)?;
    let file = match &a.spec {
        Some(p) => SpecFile::load(p)?,
        None => SpecFile::default(),
    };
    let mut spec = file.to_spec().map_err(Error::Usage)?;
    if let Some(s) = ctx.seed {
        spec.seed = s;
    }
    if let Some(c) = a.count {
        spec.count = c;
    }
    spec.validate()?;
    create_dir(&a.out)?;
    (0..spec.count).into_par_iter().try_for_each(|i| -> Result<()> {
        let gt = generate_item(&spec, &model, i)?;
        let base = a.out.join(format!("{i:04}"));
        io::save_image(&gt.image, &sibling(&base, ".png"))?;
        io::save_mask(&gt.mask, &sibling(&base, ".mask.png"))?;
        io::save_params(&gt.params, &sibling(&base, ".params.txt"))?;
        io::save_image(&gt.texture, &sibling(&base, ".tex.png"))?;
        crate::error::write_text(&sibling(&base, ".landmarks.txt"), &io::landmarks_to_text(&gt.landmarks))
    })?;
    let mut manifest = spec_summary(&spec);
    manifest.push_str("\n# item params_seed texture_seed\n");
    for i in 0..spec.count {
        let _ = writeln!(manifest, "{i:04} {} {}", spec.item_seed(i), texture_seed(&spec, i));
    }
    crate::error::write_text(&a.out.join("manifest.txt"), &manifest)?;
    let _ = writeln!(text, "items={} seed={}", spec.count, spec.seed);
    Ok(Outcome::Ok)
}

fn fit_options(ctx: &Context, lr: Option<f64>, iterations: Option<usize>, w_reg: Option<f64>) -> FitOptions {
    let mut o = ctx.config.fit_options();
    if let Some(v) = lr {
        o.adam.lr = v;
    }
    if let Some(v) = iterations {
        o.joint_iterations = v;
    }
    if let Some(v) = w_reg {
        o.w_reg = v;
    }
    o
}

fn fit_cmd(ctx: &Context, a: &FitArgs, text: &mut String) -> Result<Outcome> {
    let model = io::load_model(&a.model)?;
    let target = io::load_image(&a.image)?;
    let texture = io::load_image(&a.texture)?;
    let init = io::load_params(&a.init)?;
    let landmarks = a.landmarks.as_deref().map(io::load_landmarks).transpose()?;
    let opts = fit_options(ctx, a.lr, a.iterations, a.w_reg);
    let res = fit(&target, &model, &texture, &init, landmarks.as_ref(), &opts)?;
    io::save_params(&res.params, &a.out)?;
    let trace = a.trace.clone().unwrap_or_else(|| sibling(&a.out, ".trace.csv"));
    crate::error::write_text(&trace, &res.trace.to_csv())?;
    let _ = writeln!(
        text,
        "iterations={} initial_objective={:.9e} objective={:.9e}",
        res.trace.steps,
        res.initial_objective,
        res.objective
    );
    Ok(Outcome::Ok)
}

/// Constant-unit, left-lit and right-lit preview lighting.
fn preview_lights() -> [(&'static str, ShLighting); 3] {
    let left = ShLighting::directional(0.55, 0.45, Vec3::new(-1.0, -0.3, -0.8));
    [("unit", ShLighting::constant(1.0)), ("left", left), ("right", left.mirrored_x())]
}

fn reconstruct(ctx: &Context, a: &ReconstructArgs, text: &mut String) -> Result<Outcome> {
    let model = io::load_model(&a.model)?;
    let images = a.images.iter().map(|p| io::load_image(p)).collect::<Result<Vec<_>>>()?;
    let params: Vec<FaceParams> = if a.fit {
        if !a.landmarks.is_empty() && a.landmarks.len() != images.len() {
            return Err(Error::Usage(format!("{} images but {} landmark files", images.len(), a.landmarks.len())));
        }
        let landmarks = a.landmarks.iter().map(|p| io::load_landmarks(p)).collect::<Result<Vec<Landmarks2D>>>()?;
        let init = a.init.as_deref().map(io::load_params).transpose()?;
        let mut opts = ctx.config.fit_options();
        opts.optimize_texture = true;
        let gray = Image::filled(a.texsize, a.texsize, 3, 0.5);
        images
            .iter()
            .enumerate()
            .map(|(i, img)| {
                let start = init.clone().unwrap_or_else(|| {
                    FaceParams::neutral(&model, default_camera(img.width, img.height), Vec3::new(0.0, 0.0, DEFAULT_DEPTH))
                });
                Ok(fit(img, &model, &gray, &start, landmarks.get(i), &opts)?.params)
            })
            .collect::<Result<_>>()?
    } else {
        if a.params.len() != images.len() {
            return Err(Error::Usage(format!("{} images but {} params files", images.len(), a.params.len())));
        }
        a.params.iter().map(|p| io::load_params(p)).collect::<Result<_>>()?
    };
    let mut ropts = ctx.config.recover_options();
    if let Some(l) = a.lambda_tv {
        ropts.lambda_tv = l;
    }
    let views: Vec<(Image, FaceParams)> = images.into_iter().zip(params.iter().cloned()).collect();
    let rtex = recover(&views, &model, a.texsize, &ropts)?;
    let mut filled = inpaint_invalid(&rtex, ctx.config.inpaint_iterations())?;
    filled.clamp01();
    create_dir(&a.out)?;
    io::save_image(&filled, &a.out.join("texture.png"))?;
    io::save_image(&rtex.texture, &a.out.join("texture_raw.png"))?;
    io::save_image(&rtex.validity, &a.out.join("validity.png"))?;
    for (i, p) in params.iter().enumerate() {
        io::save_params(p, &a.out.join(format!("view{i:02}.params.txt")))?;
    }
    let p0 = &params[0];
    for (name, light) in preview_lights() {
        let img = relight(&filled, &model, &p0.coeffs, &p0.pose, &p0.camera, &light)?;
        io::save_image(&img, &a.out.join(format!("relit_{name}.png")))?;
    }
    let valid = rtex.valid_mask().count();
    let _ = writeln!(text, "views={} texels={} valid_texels={valid}", views.len(), a.texsize * a.texsize);
    let trace: Vec<String> = rtex.objective_trace.iter().map(|v| format!("{v:.9e}")).collect();
    let _ = writeln!(text, "objective_trace={}", trace.join(","));
    Ok(Outcome::Ok)
}

fn composite(ctx: &Context, a: &CompositeArgs, text: &mut String) -> Result<Outcome> {
    let face = io::load_image(&a.face)?;
    let face_mask = io::load_mask(&a.facemask)?;
    let mouth = io::load_mask(&a.mouthmask)?;
    let bg = io::load_image(&a.background)?;
    let feather = a.feather.or(ctx.config.composite.feather).unwrap_or(0);
    let out = texmorph_core::compositor::composite(&face, &face_mask, &mouth, &bg, feather)?;
    io::save_image(&out, &a.out)?;
    let eff = texmorph_core::compositor::effective_mask(&face_mask, &mouth)?;
    let _ = writeln!(text, "face_pixels={} mouth_pixels={} feather={feather}", eff.count(), mouth.count());
    Ok(Outcome::Ok)
}

fn ablate(ctx: &Context, a: &AblateArgs, text: &mut String) -> Result<Outcome> {
    let model = experiments::reference_model()?;
    let seed = ctx.seed.unwrap_or(3);
    let ropts = ctx.config.recover_options();
    let report = match a.mode {
        AblationMode::Rotations => {
            let r = experiments::texture_round_trip(&model, seed, &ropts)?;
            Report {
                checks: vec![
                    Check::above("multi-view minus frontal coverage", r.multi_coverage - r.frontal_coverage, 0.0),
                    Check::at_least("multi-view front-hemisphere coverage", r.multi_coverage, 0.95),
                ],
                notes: vec![
                    ("frontal_coverage".into(), r.frontal_coverage),
                    ("multi_coverage".into(), r.multi_coverage),
                    ("front_texels".into(), r.front_texels as f64),
                    ("frontal_ssim".into(), r.frontal_ssim),
                ],
            }
        }
        AblationMode::Mouth => {
            let r = experiments::mouth_contract(&model, 50, seed)?;
            Report {
                checks: vec![
                    Check::at_most("face pixels inside the mouth mask", r.mouth_violations as f64, 0.0),
                    Check::at_most("changed pixels outside the effective mask", r.outside_violations as f64, 0.0),
                    Check::at_least("composites with an open mouth", r.open_mouths as f64, 1.0),
                ],
                notes: vec![
                    ("composites".into(), r.composites as f64),
                    ("mouth_pixels".into(), r.mouth_pixels as f64),
                ],
            }
        }
        AblationMode::Relight => {
            let r = experiments::disentanglement(&model, seed, &ropts)?;
            Report {
                checks: vec![Check::at_least("constant-light / known-light albedo L1", r.ratio(), 2.0)],
                notes: vec![
                    ("l1_known_lighting".into(), r.l1_known_lighting),
                    ("l1_constant_lighting".into(), r.l1_constant_lighting),
                ],
            }
        }
    };
    create_dir(&a.out)?;
    let body = report.to_text();
    crate::error::write_text(&a.out.join("report.txt"), &body)?;
    text.push_str(&body);
    Ok(if report.passed() { Outcome::Ok } else { Outcome::CheckFailed })
}

fn gradcheck_cmd(ctx: &Context, a: &GradcheckArgs, text: &mut String) -> Result<Outcome> {
    let base = ctx.seed.unwrap_or(0);
    let reports = (0..a.scenes as u64)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let toy = toy_scene(base + i, a.grazing)?;
            let opts = GradcheckOptions {
                tolerance: a.tolerance,
                seed: base + i,
                ..Default::default()
            };
            Ok(gradcheck(&toy.scene(), &toy.target, &toy.mask, &opts)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut body = String::new();
    let mut failed = 0;
    let mut excluded = 0;
    for (i, r) in reports.iter().enumerate() {
        let _ = writeln!(body, "# scene {}", base + i as u64);
        body.push_str(&r.to_text());
        failed += usize::from(!r.passed());
        excluded += r.excluded_count();
    }
    let _ = writeln!(body, "scenes={} failed={failed} excluded={excluded}", reports.len());
    if let Some(p) = &a.report {
        crate::error::write_text(p, &body)?;
    }
    text.push_str(&body);
    Ok(if failed == 0 { Outcome::Ok } else { Outcome::CheckFailed })
}

fn metrics(a: &MetricsArgs, text: &mut String) -> Result<Outcome> {
    let x = io::load_image(&a.a)?;
    let y = io::load_image(&a.b)?;
    let mask = a.mask.as_deref().map(io::load_mask).transpose()?;
    let l1v = l1(&x, &y, mask.as_ref())?;
    let p = psnr(&x, &y, mask.as_ref())?;
    let s = match &mask {
        Some(m) => ssim_masked(&x, &y, m)?,
        None => ssim(&x, &y)?,
    };
    let capped = if p.capped { " (identical, capped)" } else { "" };
    let _ = writeln!(text, "{:<6} {:>12}", "metric", "value");
    let _ = writeln!(text, "{:<6} {:>12.6}", "L1", l1v);
    let _ = writeln!(text, "{:<6} {:>12.4}{capped}", "PSNR", p.db);
    let _ = writeln!(text, "{:<6} {:>12.6}", "SSIM", s);
    if a.machine {
        let _ = writeln!(text, "l1={l1v}\npsnr={}\nssim={s}", p.db);
    }
    Ok(Outcome::Ok)
}
