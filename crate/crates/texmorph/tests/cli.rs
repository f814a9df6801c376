use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texmorph::engine::{Mesh, ShapeCoeffs, Vec3};
use texmorph::io::{load_model, load_obj, save_obj};

fn texmorph(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_texmorph"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A 3×3 vertex sheet, displaced per vertex by `bump`.
fn sheet(bump: impl Fn(usize) -> f64) -> Mesh {
    let mut vertices = Vec::new();
    let mut uv = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            let i = r * 3 + c;
            vertices.push(Vec3::new(c as f64, r as f64, bump(i)));
            uv.push([c as f64 / 2.0, r as f64 / 2.0]);
        }
    }
    let mut triangles = Vec::new();
    for r in 0..2u32 {
        for c in 0..2u32 {
            let i = r * 3 + c;
            triangles.push([i, i + 3, i + 4]);
            triangles.push([i, i + 4, i + 1]);
        }
    }
    Mesh { vertices, triangles, uv }
}

fn write_samples(dir: &Path, meshes: &[Mesh]) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, m) in meshes.iter().enumerate() {
        save_obj(m, &dir.join(format!("s{i}.obj"))).unwrap();
    }
    std::fs::write(dir.join("mouth.txt"), "0\n1\n4\n").unwrap();
}

fn build(dir: &Path, ks: usize) -> Output {
    let ks = ks.to_string();
    texmorph(dir, &["build-model", "--samples", "samples", "--mouth", "samples/mouth.txt", "--ks", &ks, "--ke", "0", "--out", "m.mfm"])
}

#[test]
fn build_model_identical_samples_is_a_rank_error() {
    let tmp = tempfile::tempdir().unwrap();
    write_samples(&tmp.path().join("samples"), &[sheet(|_| 0.0), sheet(|_| 0.0)]);
    let o = build(tmp.path(), 1);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));
    assert!(!tmp.path().join("m.mfm").exists());
}

#[test]
fn build_model_two_samples_basis_follows_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let a = sheet(|i| 0.1 * i as f64);
    let b = sheet(|i| if i % 2 == 0 { 0.5 } else { -0.25 });
    write_samples(&tmp.path().join("samples"), &[a.clone(), b.clone()]);
    let o = build(tmp.path(), 1);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("samples=2 vertices=9 triangles=8 k_shape=1 k_expr=0 mouth_loop=3"), "{out}");

    let model = load_model(&tmp.path().join("m.mfm")).unwrap();
    let diff: Vec<f64> = a.vertices.iter().zip(&b.vertices).flat_map(|(p, q)| [p.x - q.x, p.y - q.y, p.z - q.z]).collect();
    let dn = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    let col: Vec<f64> = model.shape_column(0).iter().map(|&x| x as f64).collect();
    let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = col.iter().zip(&diff).map(|(x, y)| x * y).sum::<f64>() / (norm * dn);
    assert!((norm - 1.0).abs() < 1e-6, "{norm}");
    assert!((cos.abs() - 1.0).abs() < 1e-6, "{cos}");
}

#[test]
fn build_model_full_rank_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let meshes: Vec<Mesh> = (0..5)
        .map(|_| {
            let bumps: Vec<f64> = (0..9).map(|_| rng.random_range(-0.5..0.5)).collect();
            sheet(|i| bumps[i])
        })
        .collect();
    write_samples(&tmp.path().join("samples"), &meshes);
    let o = build(tmp.path(), 4);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("k_shape=4"));
    let model = load_model(&tmp.path().join("m.mfm")).unwrap();
    for i in 0..meshes.len() {
        let m = load_obj(&tmp.path().join(format!("samples/s{i}.obj"))).unwrap();
        let alpha = model.project_shape(&m).unwrap();
        let back = model.synthesize(&ShapeCoeffs { shape: alpha, expr: vec![] }).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (p, q) in back.vertices.iter().zip(&m.vertices) {
            num += (p - q).norm_squared();
            den += q.norm_squared();
        }
        assert!((num / den).sqrt() < 1e-5, "sample {i}: {}", (num / den).sqrt());
    }
}

#[test]
fn input_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = texmorph(tmp.path(), &["render", "--model", "missing.mfm", "--params", "p.txt", "--texture", "t.png", "--out", "o.png"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.mfm"), "{}", stderr(&o));

    std::fs::write(tmp.path().join("bad.mfm"), b"MFM0 not a model").unwrap();
    let o = texmorph(tmp.path(), &["sample", "--model", "bad.mfm", "--out", "c"]);
    assert_eq!(o.status.code(), Some(2));

    let o = texmorph(tmp.path(), &["gradcheck", "--scenes", "1", "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));

    let o = texmorph(tmp.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corpus_render_metrics_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("spec.toml"), "count = 2\nwidth = 48\nheight = 48\ntexture_size = 32\n").unwrap();
    let o = texmorph(d, &["build-model", "--procedural", "--identities", "8", "--ks", "5", "--ke", "3", "--out", "m.mfm"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = texmorph(d, &["corpus", "--model", "m.mfm", "--spec", "spec.toml", "--out", "c"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["0000.png", "0000.mask.png", "0000.params.txt", "0000.tex.png", "0001.png", "manifest.txt"] {
        assert!(d.join("c").join(f).exists(), "{f}");
    }
    let o = texmorph(d, &["render", "--model", "m.mfm", "--params", "c/0000.params.txt", "--texture", "c/0000.tex.png", "--out", "r.png"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(d.join("r.mask.png").exists() && d.join("r.mouth.png").exists());

    // The corpus image is the same render composited over a backdrop; inside
    // the face mask only 8-bit rounding separates the two files.
    let o = texmorph(d, &["metrics", "--a", "r.png", "--b", "c/0000.png", "--mask", "r.mask.png", "--machine"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let value = |key: &str| -> f64 {
        out.lines().find_map(|l| l.strip_prefix(key)).unwrap_or_else(|| panic!("{key} missing in {out}")).parse().unwrap()
    };
    assert!(value("l1=") < 2e-3, "{out}");
    assert!(value("psnr=") > 45.0, "{out}");
}

#[test]
fn gradcheck_and_ablation_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = texmorph(tmp.path(), &["gradcheck", "--scenes", "2", "--grazing", "--report", "g.txt"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report = std::fs::read_to_string(tmp.path().join("g.txt")).unwrap();
    assert!(report.contains("coverage"), "{report}");

    let o = texmorph(tmp.path(), &["gradcheck", "--scenes", "1", "--tolerance", "0"]);
    assert_eq!(o.status.code(), Some(1));

    let o = texmorph(tmp.path(), &["ablate", "--mode", "relight", "--out", "a"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report = std::fs::read_to_string(tmp.path().join("a/report.txt")).unwrap();
    assert!(report.ends_with("result=pass\n"), "{report}");
}
