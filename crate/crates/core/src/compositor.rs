//! Foreground/background compositing with mouth exclusion.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::float::Float;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::{Image, Mask};

/// Projected loops smaller than this (in square pixels) count as closed.
pub const MIN_MOUTH_AREA: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MouthFlags {
    /// A loop vertex lies in front of the near plane; the mask is empty.
    pub behind_camera: bool,
    /// Projected area under [`MIN_MOUTH_AREA`]; the mask is empty.
    pub degenerate: bool,
    /// The loop self-intersects and its convex hull was filled instead.
    pub hull_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct MouthMask {
    pub mask: Mask,
    pub flags: MouthFlags,
}

/// Signed shoelace area.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// True when two non-adjacent edges of the closed polygon properly cross.
pub fn self_intersects(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// Monotone-chain convex hull, counter-clockwise in a y-up reading.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: &mut dyn Iterator<Item = &[f64; 2]> =
            if pass == 0 { &mut p.iter() } else { &mut p.iter().rev() };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Scanline fill: a pixel is set when its center lies inside the polygon
/// under the crossing-number rule. Each row takes the half-open spans
/// `[x_left, x_right)` between sorted edge crossings.
pub fn fill_polygon(poly: &[[f64; 2]], width: usize, height: usize) -> Mask {
    let mut mask = Mask::new(width, height);
    let n = poly.len();
    if n < 3 {
        return mask;
    }
    let mut xs = Vec::new();
    for y in 0..height {
        let yc = y as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            if (a[1] <= yc) != (b[1] <= yc) {
                xs.push(a[0] + (yc - a[1]) / (b[1] - a[1]) * (b[0] - a[0]));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // centers x + 0.5 in [left, right)
            let x0 = (span[0] - 0.5).ceil().max(0.0);
            let x1 = (span[1] - 0.5).ceil().min(width as f64);
            let mut x = x0;
            while x < x1 {
                mask.set(x as usize, y, true);
                x += 1.0;
            }
        }
    }
    mask
}

/// Inner-mouth mask from the projected mouth loop.
pub fn mouth_mask(screen: &[[f64; 3]], mouth_loop: &[u32], cam: &Camera) -> Result<MouthMask> {
    if mouth_loop.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "mouth loop needs at least 3 vertices, got {}",
            mouth_loop.len()
        )));
    }
    let mut flags = MouthFlags::default();
    let mut poly = Vec::with_capacity(mouth_loop.len());
    for &i in mouth_loop {
        let p = screen.get(i as usize).ok_or_else(|| {
            Error::InvalidInput(format!("mouth loop index {i} out of range ({} vertices)", screen.len()))
        })?;
        if !(p[2] >= cam.near) {
            flags.behind_camera = true;
        }
        poly.push([p[0], p[1]]);
    }
    let empty = Mask::new(cam.width, cam.height);
    if flags.behind_camera {
        return Ok(MouthMask { mask: empty, flags });
    }
    if self_intersects(&poly) {
        log::warn!("mouth loop self-intersects; filling its convex hull");
        flags.hull_fallback = true;
        poly = convex_hull(&poly);
    }
    if polygon_area(&poly).abs() < MIN_MOUTH_AREA {
        flags.degenerate = true;
        return Ok(MouthMask { mask: empty, flags });
    }
    Ok(MouthMask {
        mask: fill_polygon(&poly, cam.width, cam.height),
        flags,
    })
}

/// `face_mask AND NOT mouth`.
pub fn effective_mask(face_mask: &Mask, mouth: &Mask) -> Result<Mask> {
    mouth.check_dims(face_mask.width, face_mask.height)?;
    Ok(face_mask.and_not(mouth))
}

/// Per-pixel blend weight: 1 inside the effective mask, 0 outside, and with
/// `feather > 0` a linear ramp `min(1, d / (feather + 1))` where `d` is the
/// Euclidean distance to the nearest pixel outside the mask.
pub fn alpha_map(mask: &Mask, feather: usize) -> Vec<f64> {
    let (w, h) = (mask.width, mask.height);
    let reach = feather as isize + 1;
    let mut alpha = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                alpha.push(0.0);
                continue;
            }
            if feather == 0 {
                alpha.push(1.0);
                continue;
            }
            let mut best = f64::INFINITY;
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    if !mask.get(nx as usize, ny as usize) {
                        best = best.min(((dx * dx + dy * dy) as f64).sqrt());
                    }
                }
            }
            alpha.push((best / (feather as f64 + 1.0)).min(1.0));
        }
    }
    alpha
}

/// Places `face` over `background` on `face_mask AND NOT mouth`.
pub fn composite(face: &Image, face_mask: &Mask, mouth: &Mask, background: &Image, feather: usize) -> Result<Image> {
    face.check_same_shape(background)?;
    face_mask.check_dims(face.width, face.height)?;
    let eff = effective_mask(face_mask, mouth)?;
    let alpha = alpha_map(&eff, feather);
    let ch = face.channels;
    let mut out = background.clone();
    for (i, &a) in alpha.iter().enumerate() {
        if a <= 0.0 {
            continue;
        }
        for c in 0..ch {
            let k = i * ch + c;
            out.data[k] = if a >= 1.0 {
                face.data[k]
            } else {
                a * face.data[k] + (1.0 - a) * background.data[k]
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Winding number of `poly` around `p`.
    fn winding(poly: &[[f64; 2]], p: [f64; 2]) -> i32 {
        let mut wn = 0;
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            let side = cross(a, b, p);
            if a[1] <= p[1] {
                if b[1] > p[1] && side > 0.0 {
                    wn += 1;
                }
            } else if b[1] <= p[1] && side < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    fn oracle(poly: &[[f64; 2]], w: usize, h: usize) -> Mask {
        Mask::from_fn(w, h, |x, y| winding(poly, [x as f64 + 0.5, y as f64 + 0.5]) != 0)
    }

    fn cam(w: usize, h: usize) -> Camera {
        Camera::centered(w, h, 20.0)
    }

    fn screen(poly: &[[f64; 2]], z: f64) -> Vec<[f64; 3]> {
        poly.iter().map(|p| [p[0], p[1], z]).collect()
    }

    #[test]
    fn square_matches_known_pixels() {
        let sq = [[2.0, 3.0], [7.0, 3.0], [7.0, 6.0], [2.0, 6.0]];
        let loop_: Vec<u32> = (0..4).collect();
        let m = mouth_mask(&screen(&sq, 5.0), &loop_, &cam(10, 10)).unwrap();
        assert_eq!(m.flags, MouthFlags::default());
        let expect = Mask::from_fn(10, 10, |x, y| (2..7).contains(&x) && (3..6).contains(&y));
        assert_eq!(m.mask, expect);
        assert_eq!(m.mask, oracle(&sq, 10, 10));
    }

    #[test]
    fn closed_mouth_is_empty() {
        let sliver = [[2.0, 5.0], [6.0, 5.02], [8.0, 5.0], [6.0, 4.98]];
        let m = mouth_mask(&screen(&sliver, 5.0), &[0, 1, 2, 3], &cam(10, 10)).unwrap();
        assert!(m.flags.degenerate);
        assert!(m.mask.is_empty());
    }

    #[test]
    fn outside_frame_is_empty() {
        let sq = [[20.0, 20.0], [30.0, 20.0], [30.0, 30.0], [20.0, 30.0]];
        let m = mouth_mask(&screen(&sq, 5.0), &[0, 1, 2, 3], &cam(10, 10)).unwrap();
        assert!(m.mask.is_empty());
        assert!(!m.flags.degenerate);
    }

    #[test]
    fn behind_camera_is_flagged() {
        let sq = [[2.0, 3.0], [7.0, 3.0], [7.0, 6.0], [2.0, 6.0]];
        let mut s = screen(&sq, 5.0);
        s[2][2] = -1.0;
        let m = mouth_mask(&s, &[0, 1, 2, 3], &cam(10, 10)).unwrap();
        assert!(m.flags.behind_camera);
        assert!(m.mask.is_empty());
    }

    #[test]
    fn bowtie_uses_hull() {
        let bow = [[1.0, 1.0], [9.0, 9.0], [9.0, 1.0], [1.0, 9.0]];
        let m = mouth_mask(&screen(&bow, 5.0), &[0, 1, 2, 3], &cam(10, 10)).unwrap();
        assert!(m.flags.hull_fallback);
        let hull = convex_hull(&bow);
        assert_eq!(hull.len(), 4);
        assert_eq!(m.mask, oracle(&hull, 10, 10));
        assert_eq!(m.mask.count(), 64);
    }

    #[test]
    fn bad_loops_are_errors() {
        let s = screen(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 5.0);
        assert!(mouth_mask(&s, &[0, 1], &cam(4, 4)).is_err());
        assert!(mouth_mask(&s, &[0, 1, 7], &cam(4, 4)).is_err());
    }

    #[test]
    fn composite_examples() {
        let face = Image::from_fn(8, 6, 3, |x, y, _| ((x + y) % 2) as f64);
        let bg = Image::from_fn(8, 6, 3, |x, _, c| 0.1 * x as f64 + 0.01 * c as f64);
        let none = Mask::new(8, 6);
        let full = Mask::full(8, 6);
        assert_eq!(composite(&face, &none, &none, &bg, 0).unwrap(), bg);
        assert_eq!(composite(&face, &full, &none, &bg, 0).unwrap(), face);
        let fm = Mask::from_fn(8, 6, |x, y| x > 1 && y > 0);
        let mm = Mask::from_fn(8, 6, |x, y| x == 4 && y < 4);
        let out = composite(&face, &fm, &mm, &bg, 0).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                let src = if fm.get(x, y) && !mm.get(x, y) { &face } else { &bg };
                for c in 0..3 {
                    assert_eq!(out.get(x, y, c), src.get(x, y, c));
                }
            }
        }
        assert_eq!(composite(&out, &fm, &mm, &bg, 0).unwrap(), out);
        assert!(composite(&face, &fm, &Mask::new(3, 3), &bg, 0).is_err());
        assert!(composite(&face, &fm, &mm, &Image::new(8, 5, 3), 0).is_err());
    }

    #[test]
    fn feather_ramps_inside_only() {
        let face = Image::filled(12, 12, 3, 1.0);
        let bg = Image::new(12, 12, 3);
        let fm = Mask::from_fn(12, 12, |x, _| x >= 3);
        let out = composite(&face, &fm, &Mask::new(12, 12), &bg, 2).unwrap();
        assert_eq!(out.get(2, 5, 0), 0.0);
        assert!((out.get(3, 5, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((out.get(4, 5, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(out.get(5, 5, 0), 1.0);
        assert_eq!(out.get(11, 5, 0), 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn scanline_matches_winding_oracle(seed in 0u64..10_000, n in 3usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Star-shaped around a center, so the polygon is simple.
            let c = [rng.random_range(4.0..20.0), rng.random_range(4.0..20.0)];
            let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..core::f64::consts::TAU)).collect();
            angles.sort_by(f64::total_cmp);
            let poly: Vec<[f64; 2]> = angles
                .iter()
                .map(|a| {
                    let r = rng.random_range(1.0..12.0);
                    [c[0] + r * a.cos(), c[1] + r * a.sin()]
                })
                .collect();
            prop_assert_eq!(fill_polygon(&poly, 24, 24), oracle(&poly, 24, 24));
        }

        #[test]
        fn mouth_pixels_show_background(seed in 0u64..10_000, feather in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (16, 12);
            let face = Image::from_fn(w, h, 3, |_, _, _| rng.random_range(0.0..1.0));
            let bg = Image::from_fn(w, h, 3, |_, _, _| rng.random_range(0.0..1.0));
            let fm = Mask::from_fn(w, h, |_, _| rng.random_bool(0.7));
            let mm = Mask::from_fn(w, h, |_, _| rng.random_bool(0.2));
            let out = composite(&face, &fm, &mm, &bg, feather).unwrap();
            for i in 0..w * h {
                if !fm.data[i] || mm.data[i] {
                    prop_assert_eq!(out.pixel(i), bg.pixel(i));
                }
            }
        }
    }
}
