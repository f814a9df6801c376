use super::*;
use crate::synth::{generate_item, SampleSpec, TextureSpec};
use crate::template::default_model;

#[test]
fn landmark_loss_examples() {
    let screen = [[10.0, 20.0, 5.0], [3.0, 4.0, 5.0], [-1.0, 7.5, 5.0]];
    let exact = Landmarks2D::from_projection(&screen, &[0, 2]);
    assert_eq!(landmark_loss(&screen, &exact).unwrap().loss, 0.0);
    let off = Landmarks2D {
        points: vec![Landmark { vertex: 1, x: 0.0, y: 0.0, weight: 1.0 }],
    };
    let ll = landmark_loss(&screen, &off).unwrap();
    assert_eq!(ll.loss, 25.0);
    assert_eq!(ll.grad, vec![(1, [6.0, 8.0])]);
    assert!(matches!(landmark_loss(&screen, &Landmarks2D::default()), Err(Error::EmptyLandmarks)));
    let bad = Landmarks2D {
        points: vec![Landmark { vertex: 9, x: 0.0, y: 0.0, weight: 1.0 }],
    };
    assert!(landmark_loss(&screen, &bad).is_err());
}

#[test]
fn landmark_loss_matches_naive_loop() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let screen: Vec<[f64; 3]> = (0..30).map(|_| [rng.random_range(0.0..64.0), rng.random_range(0.0..64.0), 4.0]).collect();
    let lm = Landmarks2D {
        points: (0..12)
            .map(|_| Landmark {
                vertex: rng.random_range(0..30),
                x: rng.random_range(0.0..64.0),
                y: rng.random_range(0.0..64.0),
                weight: rng.random_range(0.0..2.0),
            })
            .collect(),
    };
    let (mut num, mut den) = (0.0, 0.0);
    for p in &lm.points {
        let s = screen[p.vertex as usize];
        num += p.weight * ((s[0] - p.x).powi(2) + (s[1] - p.y).powi(2));
        den += p.weight;
    }
    assert!((landmark_loss(&screen, &lm).unwrap().loss - num / den).abs() < 1e-7);
    // Gradient by central differences on one coordinate.
    let ll = landmark_loss(&screen, &lm).unwrap();
    let v = lm.points[0].vertex as usize;
    let gx: f64 = ll.grad.iter().filter(|(i, _)| *i as usize == v).map(|(_, g)| g[0]).sum();
    let mut s2 = screen.clone();
    s2[v][0] += 1e-5;
    let lp = landmark_loss(&s2, &lm).unwrap().loss;
    s2[v][0] -= 2e-5;
    let lmn = landmark_loss(&s2, &lm).unwrap().loss;
    assert!((gx - (lp - lmn) / 2e-5).abs() < 1e-5);
}

fn small_spec(seed: u64) -> SampleSpec {
    SampleSpec {
        seed,
        width: 64,
        height: 64,
        texture: TextureSpec { size: 64, ..TextureSpec::default() },
        ..SampleSpec::default()
    }
}

#[test]
fn fixed_point_returns_init() {
    let model = default_model(10, 6, 3, 1).unwrap();
    let gt = generate_item(&small_spec(3), &model, 0).unwrap();
    let res = fit(&gt.image, &model, &gt.texture, &gt.params, Some(&gt.landmarks), &FitOptions::default()).unwrap();
    assert_eq!(res.params, gt.params);
    assert_eq!(res.trace.rows.len(), 1);
    assert_eq!(res.trace.steps, 0);
    assert_eq!(res.trace.rows[0].photometric, 0.0);
}

#[test]
fn noise_target_is_best_effort() {
    use rand::{Rng, SeedableRng};
    let model = default_model(10, 6, 3, 1).unwrap();
    let gt = generate_item(&small_spec(4), &model, 0).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let noise = Image::from_fn(64, 64, 3, |_, _, _| rng.random_range(0.0..1.0));
    let opts = FitOptions { joint_iterations: 30, ..FitOptions::default() };
    let res = fit(&noise, &model, &gt.texture, &gt.params, None, &opts).unwrap();
    assert!(res.params.is_finite());
    assert!(res.objective <= res.initial_objective);
    assert_eq!(res.trace.steps, 30);
    assert_eq!(res.trace.rows.len(), 31);
}

#[test]
fn empty_init_coverage_is_an_error() {
    let model = default_model(10, 6, 3, 1).unwrap();
    let gt = generate_item(&small_spec(5), &model, 0).unwrap();
    let mut init = gt.params.clone();
    init.pose.translation = Vec3::new(50.0, 0.0, 5.0);
    assert!(matches!(
        fit(&gt.image, &model, &gt.texture, &init, None, &FitOptions::default()),
        Err(Error::InitCoverage)
    ));
}

#[test]
fn target_size_must_match_camera() {
    let model = default_model(10, 6, 3, 1).unwrap();
    let gt = generate_item(&small_spec(5), &model, 0).unwrap();
    let wrong = Image::new(32, 64, 3);
    assert!(fit(&wrong, &model, &gt.texture, &gt.params, None, &FitOptions::default()).is_err());
}

#[test]
fn params_text_round_trip() {
    let model = default_model(10, 6, 3, 1).unwrap();
    let gt = generate_item(&small_spec(6), &model, 0).unwrap();
    let mut p = gt.params.clone();
    p.pose.rotation.x = 0.1 + 0.2;
    p.lighting.gamma[1][4] = -1.0 / 3.0;
    let text = params_to_text(&p);
    let (back, warnings) = params_from_text(&text).unwrap();
    assert_eq!(back, p);
    assert!(warnings.is_empty());

    let extra = format!("{text}colour = blue\n");
    let (back, warnings) = params_from_text(&extra).unwrap();
    assert_eq!(back, p);
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("colour"));

    let missing: String = text.lines().filter(|l| !l.starts_with("focal")).map(|l| format!("{l}\n")).collect();
    match params_from_text(&missing) {
        Err(Error::MissingField(f)) => assert_eq!(f, "focal"),
        other => panic!("{other:?}"),
    }
    let broken = text.replace("near = 0.1", "near = abc");
    match params_from_text(&broken) {
        Err(Error::Parse { line, message }) => {
            assert_eq!(line, 9);
            assert!(message.contains("near"));
        }
        other => panic!("{other:?}"),
    }
}
