//! Image similarity: L1, PSNR and single-scale SSIM.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::float::Float;
use crate::error::{Error, Result};
use crate::image::{Image, Mask};

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn masked_pixels(a: &Image, b: &Image, mask: Option<&Mask>) -> Result<Vec<usize>> {
    a.check_same_shape(b)?;
    let n = a.num_pixels();
    let pixels: Vec<usize> = match mask {
        Some(m) => {
            m.check_dims(a.width, a.height)?;
            (0..n).filter(|&i| m.data[i]).collect()
        }
        None => (0..n).collect(),
    };
    if pixels.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(pixels)
}

/// Mean absolute difference over (masked) pixels and channels.
pub fn l1(a: &Image, b: &Image, mask: Option<&Mask>) -> Result<f64> {
    let pixels = masked_pixels(a, b, mask)?;
    let ch = a.channels;
    let mut sum = 0.0;
    for &i in &pixels {
        for c in 0..ch {
            sum += (a.data[i * ch + c] - b.data[i * ch + c]).abs();
        }
    }
    Ok(sum / (pixels.len() * ch) as f64)
}

/// Mean squared difference over (masked) pixels and channels.
pub fn mse(a: &Image, b: &Image, mask: Option<&Mask>) -> Result<f64> {
    let pixels = masked_pixels(a, b, mask)?;
    let ch = a.channels;
    let mut sum = 0.0;
    for &i in &pixels {
        for c in 0..ch {
            let d = a.data[i * ch + c] - b.data[i * ch + c];
            sum += d * d;
        }
    }
    Ok(sum / (pixels.len() * ch) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psnr {
    pub db: f64,
    /// Set when the images are identical and `db` was capped.
    pub capped: bool,
}

/// Peak signal-to-noise ratio for peak value 1.
pub fn psnr(a: &Image, b: &Image, mask: Option<&Mask>) -> Result<Psnr> {
    let m = mse(a, b, mask)?;
    let db = 10.0 * (1.0 / m).log10();
    if m == 0.0 || db > PSNR_CAP {
        return Ok(Psnr { db: PSNR_CAP, capped: true });
    }
    Ok(Psnr { db, capped: false })
}

pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable filter over valid window positions only; output is
/// `(w − k + 1) × (h − k + 1)`.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|j| k[j] * data[y * w + x + j]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|j| k[j] * rows[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// Per-window SSIM map over valid window positions of the grayscale images.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Image> {
    a.check_same_shape(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: a.width,
            height: a.height,
            window: SSIM_WINDOW,
        });
    }
    let ga = a.to_gray();
    let gb = b.to_gray();
    let (w, h) = (a.width, a.height);
    let k = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let sq = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&ga.data, w, h, &k);
    let mu_b = filter_valid(&gb.data, w, h, &k);
    let e_aa = filter_valid(&sq(&ga.data, &ga.data), w, h, &k);
    let e_bb = filter_valid(&sq(&gb.data, &gb.data), w, h, &k);
    let e_ab = filter_valid(&sq(&ga.data, &gb.data), w, h, &k);
    let data = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .collect();
    Image::from_data(w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW, 1, data)
}

/// Mean SSIM over all valid window positions.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let map = ssim_map(a, b)?;
    Ok(map.data.iter().sum::<f64>() / map.data.len() as f64)
}

/// Mean SSIM over the windows whose center pixel is set in `mask`.
pub fn ssim_masked(a: &Image, b: &Image, mask: &Mask) -> Result<f64> {
    mask.check_dims(a.width, a.height)?;
    let map = ssim_map(a, b)?;
    let half = SSIM_WINDOW / 2;
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..map.height {
        for x in 0..map.width {
            if mask.get(x + half, y + half) {
                sum += map.data[y * map.width + x];
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, 3, |_, _, _| rng.random_range(0.0..1.0))
    }

    /// Direct-definition SSIM: explicit 2D window sums per position.
    fn ssim_oracle(a: &Image, b: &Image) -> f64 {
        let (ga, gb) = (a.to_gray(), b.to_gray());
        let n = SSIM_WINDOW;
        let mut wts = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
        let mut total = 0.0;
        for (i, row) in wts.iter_mut().enumerate() {
            for (j, w) in row.iter_mut().enumerate() {
                let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
                *w = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
                total += *w;
            }
        }
        let mut acc = 0.0;
        let mut count = 0;
        for y0 in 0..=a.height - n {
            for x0 in 0..=a.width - n {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let w = wts[i][j] / total;
                        ma += w * ga.get(x0 + j, y0 + i, 0);
                        mb += w * gb.get(x0 + j, y0 + i, 0);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let w = wts[i][j] / total;
                        let da = ga.get(x0 + j, y0 + i, 0) - ma;
                        let db = gb.get(x0 + j, y0 + i, 0) - mb;
                        va += w * da * da;
                        vb += w * db * db;
                        cov += w * da * db;
                    }
                }
                acc += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                count += 1;
            }
        }
        acc / count as f64
    }

    #[test]
    fn l1_examples() {
        let a = random(9, 7, 1);
        assert_eq!(l1(&a, &a, None).unwrap(), 0.0);
        let z = Image::new(4, 4, 3);
        let h = Image::filled(4, 4, 3, 0.5);
        assert_eq!(l1(&z, &h, None).unwrap(), 0.5);
        let b = random(9, 7, 2);
        let mut sum = 0.0;
        for (p, q) in a.data.iter().zip(&b.data) {
            sum += (p - q).abs();
        }
        assert!((l1(&a, &b, None).unwrap() - sum / a.data.len() as f64).abs() < 1e-7);
    }

    #[test]
    fn psnr_examples() {
        let a = Image::from_fn(8, 8, 3, |x, y, c| 0.1 + (x + y + c) as f64 / 30.0);
        let mut b = a.clone();
        b.data.iter_mut().for_each(|v| *v += 0.1);
        let p = psnr(&a, &b, None).unwrap();
        assert!((p.db - 20.0).abs() < 1e-12, "{}", p.db);
        assert!(!p.capped);
        assert_eq!(psnr(&a, &a, None).unwrap(), Psnr { db: 99.0, capped: true });
        let c = random(8, 8, 3);
        let mut s = 0.0;
        for (p, q) in a.data.iter().zip(&c.data) {
            s += (p - q) * (p - q);
        }
        let oracle = 10.0 * (a.data.len() as f64 / s).log10();
        assert!((psnr(&a, &c, None).unwrap().db - oracle).abs() < 1e-5);
    }

    #[test]
    fn masked_metrics_need_pixels() {
        let a = random(4, 4, 1);
        assert!(matches!(l1(&a, &a, Some(&Mask::new(4, 4))), Err(Error::EmptyMask)));
        assert!(matches!(l1(&a, &random(5, 4, 1), None), Err(Error::Dimension { .. })));
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let a = random(16, 16, 4);
        let noise = random(16, 16, 5);
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let b = Image::from_data(16, 16, 3, a.data.iter().zip(&noise.data).map(|(p, n)| p + amp * (n - 0.5)).collect()).unwrap();
            let db = psnr(&a, &b, None).unwrap().db;
            assert!(db < last);
            last = db;
        }
    }

    #[test]
    fn ssim_examples() {
        let a = random(20, 17, 6);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let (ca, cb) = (0.3, 0.7);
        let s = ssim(&Image::filled(12, 12, 3, ca), &Image::filled(12, 12, 3, cb)).unwrap();
        let closed = (2.0 * ca * cb + SSIM_C1) / (ca * ca + cb * cb + SSIM_C1);
        assert!((s - closed).abs() < 1e-9);
        let b = random(20, 17, 7);
        assert!((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-5);
        assert!(matches!(ssim(&random(10, 30, 1), &random(10, 30, 2)), Err(Error::ImageTooSmall { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn metrics_symmetric(seed in 0u64..1000, shift in -0.2f64..0.2) {
            let a = random(14, 13, seed);
            let b = random(14, 13, seed + 1);
            prop_assert_eq!(l1(&a, &b, None).unwrap(), l1(&b, &a, None).unwrap());
            prop_assert_eq!(psnr(&a, &b, None).unwrap(), psnr(&b, &a, None).unwrap());
            let s = ssim(&a, &b).unwrap();
            prop_assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&s));
            // Constant shift of a related pair only moves the luminance term.
            let c = Image::from_data(14, 13, 3, a.data.iter().zip(&b.data).map(|(p, q)| p + 0.1 * (q - 0.5)).collect()).unwrap();
            let s_ac = ssim(&a, &c).unwrap();
            let a2 = Image::from_data(14, 13, 3, a.data.iter().map(|v| v + shift).collect()).unwrap();
            let c2 = Image::from_data(14, 13, 3, c.data.iter().map(|v| v + shift).collect()).unwrap();
            prop_assert!((ssim(&a2, &c2).unwrap() - s_ac).abs() < 1e-3);
        }
    }
}
