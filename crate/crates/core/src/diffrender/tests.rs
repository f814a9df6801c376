use super::*;
use crate::image::Image;
use nalgebra::{DMatrix, DVector};

#[test]
fn toy_gradcheck_passes() {
    for seed in 0..3 {
        let toy = toy_scene(seed, false).unwrap();
        let scene = toy.scene();
        let report = gradcheck(&scene, &toy.target, &toy.mask, &GradcheckOptions::default()).unwrap();
        assert!(report.passed(), "seed {seed}\n{}", report.to_text());
        for b in Block::ALL {
            assert!(report.block(b).checked > 0, "seed {seed} block {:?}", b);
        }
    }
}

#[test]
fn grazing_triangle_is_stable() {
    for seed in [7, 8, 9] {
        let toy = toy_scene(seed, true).unwrap();
        let scene = toy.scene();
        let (loss, grads) = backward(&scene, &toy.target, &toy.mask).unwrap();
        assert!(loss.is_finite());
        assert!(grads.is_finite());
        let report = gradcheck(&scene, &toy.target, &toy.mask, &GradcheckOptions::default()).unwrap();
        assert!(report.passed(), "{}", report.to_text());
        let pose = report.block(Block::Pose);
        assert!(
            pose.excluded.iter().any(|(_, why)| *why == Instability::Coverage),
            "seed {seed}\n{}",
            report.to_text()
        );
    }
}

#[test]
fn zero_residual_gives_zero_gradient() {
    let toy = toy_scene(3, false).unwrap();
    let scene = toy.scene();
    let target = scene.render().unwrap().image;
    let (loss, grads) = backward(&scene, &target, &toy.mask).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.shape.iter().chain(&grads.expr).chain(&grads.pose).all(|&g| g == 0.0));
    assert!(grads.gamma.iter().flatten().all(|&g| g == 0.0));
    assert!(grads.texture.unwrap().data.iter().all(|&g| g == 0.0));
}

#[test]
fn unsampled_texels_have_zero_gradient() {
    let mut toy = toy_scene(4, false).unwrap();
    toy.texture = Image::filled(32, 32, 3, 0.5);
    let scene = toy.scene();
    let rendered = scene.render().unwrap();
    let (_, grads) = backward(&scene, &toy.target, &toy.mask).unwrap();
    let tex = grads.texture.unwrap();
    let uv = toy.model.uv_f64();
    let mut touched = alloc::vec![false; 32 * 32];
    for (i, &t) in rendered.gbuffer.triangle.iter().enumerate() {
        if t == EMPTY {
            continue;
        }
        let [u, v] = interpolate_uv(&uv, &toy.model.triangles[t as usize], &rendered.gbuffer.bary[i]);
        let fp = footprint(u, v, 32, 32);
        for (k, w) in fp.texels.iter().zip(fp.weights) {
            if w != 0.0 {
                touched[*k] = true;
            }
        }
    }
    let mut untouched = 0;
    for (k, &hit) in touched.iter().enumerate() {
        if !hit {
            untouched += 1;
            assert!((0..3).all(|c| tex.data[k * 3 + c] == 0.0));
        }
    }
    assert!(untouched > 0);
}

#[test]
fn gamma_gradient_vanishes_at_least_squares_optimum() {
    // Image is linear in gamma when nothing saturates, so the least-squares
    // gamma from a direct solve must have zero analytic gradient.
    let toy = toy_scene(5, false).unwrap();
    let mut scene = toy.scene();
    scene.params.lighting = scene.params.lighting.scaled(0.6);
    let rendered = scene.render().unwrap();
    let mask = &toy.mask;
    let pixels: Vec<usize> = (0..mask.data.len()).filter(|&i| mask.data[i]).collect();
    let mut solved = scene.params.lighting;
    for c in 0..3 {
        let mut a = DMatrix::<f64>::zeros(pixels.len(), 9);
        let mut y = DVector::<f64>::zeros(pixels.len());
        for (row, &i) in pixels.iter().enumerate() {
            let t = rendered.gbuffer.triangle[i] as usize;
            let tri = toy.model.triangles[t];
            let b = rendered.gbuffer.bary[i];
            for k in 0..3 {
                let phi = sh_basis_unit(&rendered.view_normals[tri[k] as usize]);
                for j in 0..9 {
                    a[(row, j)] += b[k] * phi[j] * rendered.albedo.data[i * 3 + c];
                }
            }
            y[row] = toy.target.data[i * 3 + c];
        }
        let g = a.svd(true, true).solve(&y, 1e-12).unwrap();
        for j in 0..9 {
            solved.gamma[c][j] = g[j];
        }
    }
    scene.params.lighting = solved;
    let r2 = scene.render().unwrap();
    assert!(r2.pre_clamp.data.iter().all(|&p| (0.0..=1.0).contains(&p)), "saturated");
    let (_, grads) = backward(&scene, &toy.target, mask).unwrap();
    let norm: f64 = grads.gamma.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm < 1e-10, "gamma gradient norm {norm}");
}

#[test]
fn empty_mask_is_an_error() {
    let toy = toy_scene(0, false).unwrap();
    let mask = Mask::new(16, 16);
    assert!(matches!(backward(&toy.scene(), &toy.target, &mask), Err(Error::EmptyMask)));
}


#[test]
fn zero_texture_gamma_gradient() {
    // Render is identically zero in gamma, so d_gamma must match the linear
    // model's gradient, which is zero.
    let mut toy = toy_scene(6, false).unwrap();
    toy.texture = Image::new(8, 8, 3);
    let (_, grads) = backward(&toy.scene(), &toy.target, &toy.mask).unwrap();
    assert!(grads.gamma.iter().flatten().all(|g| g.abs() <= 1e-6));
}

#[test]
fn texture_gradient_is_adjoint() {
    use rand::{Rng, SeedableRng};
    let toy = toy_scene(8, false).unwrap();
    let scene = toy.scene();
    let (_, grads) = backward(&scene, &toy.target, &toy.mask).unwrap();
    let d_tex = grads.texture.unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let dir: Vec<f64> = (0..d_tex.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let analytic: f64 = dir.iter().zip(&d_tex.data).map(|(a, b)| a * b).sum();
    let h = 1e-5;
    let loss_at = |s: f64| {
        let mut sc = scene.clone();
        for (t, d) in sc.texture.data.iter_mut().zip(&dir) {
            *t += s * d;
        }
        photometric_loss(&sc.render().unwrap().image, &toy.target, &toy.mask).unwrap()
    };
    let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
    assert!((analytic - numeric).abs() <= 1e-3 * analytic.abs().max(numeric.abs()));
}

#[test]
fn backward_is_deterministic() {
    let toy = toy_scene(9, false).unwrap();
    let a = backward(&toy.scene(), &toy.target, &toy.mask).unwrap();
    let b = backward(&toy.scene(), &toy.target, &toy.mask).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loss_examples() {
    let a = Image::from_fn(6, 5, 3, |x, y, c| (x * 7 + y * 3 + c) as f64 / 60.0);
    let mask = Mask::full(6, 5);
    assert_eq!(photometric_loss(&a, &a, &mask).unwrap(), 0.0);
    let mut b = a.clone();
    b.data.iter_mut().for_each(|v| *v += 0.1);
    assert!((photometric_loss(&a, &b, &mask).unwrap() - 0.01).abs() < 1e-12);
    let m = Mask::from_fn(6, 5, |x, y| (x + y) % 3 == 0);
    let mut sum = 0.0;
    let mut n = 0;
    for y in 0..5 {
        for x in 0..6 {
            if (x + y) % 3 == 0 {
                for c in 0..3 {
                    let d = a.get(x, y, c) - b.get(x, y, c) * 0.7;
                    sum += d * d;
                    n += 1;
                }
            }
        }
    }
    b.data.iter_mut().for_each(|v| *v *= 0.7);
    assert!((photometric_loss(&a, &b, &m).unwrap() - sum / n as f64).abs() < 1e-7);
}
