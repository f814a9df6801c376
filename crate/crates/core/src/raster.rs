//! Z-buffered triangle rasterization and UV texture sampling.
//!
//! Pixel `(x, y)` is sampled at its center `(x + 0.5, y + 0.5)`. A pixel is
//! covered by a triangle when every edge function at the center has the sign
//! of the triangle's signed area (zero included). Among covering triangles the
//! smallest perspective-correct depth wins, ties going to the lower triangle id.
//! With culling on, only triangles that appear counter-clockwise on screen
//! (negative signed area in the y-down frame) are drawn.

#[allow(unused_imports)]
use crate::float::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::camera::Camera;
use crate::image::{Image, Mask};
use crate::par;

pub const EMPTY: u32 = u32::MAX;

/// Rows per rasterization band.
pub const BAND_ROWS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    /// Triangle id per pixel, [`EMPTY`] when uncovered.
    pub triangle: Vec<u32>,
    /// Perspective-correct barycentrics.
    pub bary: Vec<[f64; 3]>,
    /// Camera-space depth.
    pub depth: Vec<f64>,
}

impl GBuffer {
    pub fn empty(width: usize, height: usize) -> Self {
        GBuffer {
            width,
            height,
            triangle: vec![EMPTY; width * height],
            bary: vec![[0.0; 3]; width * height],
            depth: vec![f64::INFINITY; width * height],
        }
    }

    #[inline]
    pub fn covered(&self, index: usize) -> bool {
        self.triangle[index] != EMPTY
    }

    pub fn mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.triangle.iter().map(|&t| t != EMPTY).collect(),
        }
    }

    pub fn coverage(&self) -> usize {
        self.triangle.iter().filter(|&&t| t != EMPTY).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterOptions {
    pub cull_backfaces: bool,
}

impl Default for RasterOptions {
    fn default() -> Self {
        RasterOptions {
            cull_backfaces: true,
        }
    }
}

/// Edge function `(b − a) × (p − a)`.
#[inline]
pub fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Screen-space coverage test for one pixel center.
///
/// Returns the screen barycentrics `w_k / area` when covered.
#[inline]
pub fn screen_barycentrics(v: &[[f64; 3]; 3], px: f64, py: f64) -> Option<[f64; 3]> {
    let area = edge(v[0][0], v[0][1], v[1][0], v[1][1], v[2][0], v[2][1]);
    if area == 0.0 || !area.is_finite() {
        return None;
    }
    let w0 = edge(v[1][0], v[1][1], v[2][0], v[2][1], px, py);
    let w1 = edge(v[2][0], v[2][1], v[0][0], v[0][1], px, py);
    let w2 = edge(v[0][0], v[0][1], v[1][0], v[1][1], px, py);
    let inside = if area < 0.0 {
        w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0
    } else {
        w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0
    };
    inside.then(|| [w0 / area, w1 / area, w2 / area])
}

/// Perspective-correct barycentrics and depth from screen barycentrics.
#[inline]
pub fn perspective_correct(lambda: &[f64; 3], z: &[f64; 3]) -> ([f64; 3], f64) {
    let q = [lambda[0] / z[0], lambda[1] / z[1], lambda[2] / z[2]];
    let sum = q[0] + q[1] + q[2];
    ([q[0] / sum, q[1] / sum, q[2] / sum], 1.0 / sum)
}

fn triangle_vertices(screen: &[[f64; 3]], tri: &[u32; 3]) -> [[f64; 3]; 3] {
    [
        screen[tri[0] as usize],
        screen[tri[1] as usize],
        screen[tri[2] as usize],
    ]
}

/// Whether a triangle is eligible for drawing at all.
#[inline]
pub fn triangle_drawable(v: &[[f64; 3]; 3], cam: &Camera, opts: &RasterOptions) -> bool {
    if v.iter().any(|p| !(p[0].is_finite() && p[1].is_finite() && p[2].is_finite())) {
        return false;
    }
    if v.iter().any(|p| p[2] < cam.near) {
        return false;
    }
    let area = edge(v[0][0], v[0][1], v[1][0], v[1][1], v[2][0], v[2][1]);
    if area == 0.0 {
        return false;
    }
    !(opts.cull_backfaces && area > 0.0)
}

struct Band {
    triangle: Vec<u32>,
    bary: Vec<[f64; 3]>,
    depth: Vec<f64>,
}

fn rasterize_band(
    screen: &[[f64; 3]],
    triangles: &[[u32; 3]],
    cam: &Camera,
    opts: &RasterOptions,
    y0: usize,
    y1: usize,
) -> Band {
    let w = cam.width;
    let n = (y1 - y0) * w;
    let mut band = Band {
        triangle: vec![EMPTY; n],
        bary: vec![[0.0; 3]; n],
        depth: vec![f64::INFINITY; n],
    };
    for (id, tri) in triangles.iter().enumerate() {
        let v = triangle_vertices(screen, tri);
        if !triangle_drawable(&v, cam, opts) {
            continue;
        }
        let min_x = v[0][0].min(v[1][0]).min(v[2][0]);
        let max_x = v[0][0].max(v[1][0]).max(v[2][0]);
        let min_y = v[0][1].min(v[1][1]).min(v[2][1]);
        let max_y = v[0][1].max(v[1][1]).max(v[2][1]);
        // Pixel x is a candidate when min_x <= x + 0.5 <= max_x.
        let xa = (min_x - 0.5).ceil().max(0.0);
        let xb = (max_x - 0.5).floor().min(w as f64 - 1.0);
        let ya = (min_y - 0.5).ceil().max(y0 as f64);
        let yb = (max_y - 0.5).floor().min(y1 as f64 - 1.0);
        if xa > xb || ya > yb {
            continue;
        }
        let z = [v[0][2], v[1][2], v[2][2]];
        for y in ya as usize..=yb as usize {
            let py = y as f64 + 0.5;
            for x in xa as usize..=xb as usize {
                let px = x as f64 + 0.5;
                let Some(lambda) = screen_barycentrics(&v, px, py) else {
                    continue;
                };
                let (b, depth) = perspective_correct(&lambda, &z);
                if !(depth >= cam.near && depth <= cam.far) {
                    continue;
                }
                let i = (y - y0) * w + x;
                if depth < band.depth[i] {
                    band.depth[i] = depth;
                    band.triangle[i] = id as u32;
                    band.bary[i] = b;
                }
            }
        }
    }
    band
}

/// Rasterizes projected vertices `(screen x, screen y, camera z)`.
///
/// Rows are processed in bands of [`BAND_ROWS`]; each pixel only depends on
/// the triangle list, so the result is independent of the partition.
pub fn rasterize(
    screen: &[[f64; 3]],
    triangles: &[[u32; 3]],
    cam: &Camera,
    opts: &RasterOptions,
) -> GBuffer {
    let bands = cam.height.div_ceil(BAND_ROWS);
    let parts = par::map_indexed(bands, |b| {
        let y0 = b * BAND_ROWS;
        let y1 = (y0 + BAND_ROWS).min(cam.height);
        rasterize_band(screen, triangles, cam, opts, y0, y1)
    });
    let mut g = GBuffer {
        width: cam.width,
        height: cam.height,
        triangle: Vec::with_capacity(cam.width * cam.height),
        bary: Vec::with_capacity(cam.width * cam.height),
        depth: Vec::with_capacity(cam.width * cam.height),
    };
    for part in parts {
        g.triangle.extend(part.triangle);
        g.bary.extend(part.bary);
        g.depth.extend(part.depth);
    }
    g
}

/// Bilinear footprint of a UV lookup: four texel indices with weights, plus
/// the derivative of the sample position w.r.t. `(u, v)` (zero when clamped).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub texels: [usize; 4],
    pub weights: [f64; 4],
    pub fx: f64,
    pub fy: f64,
    pub dx_du: f64,
    pub dy_dv: f64,
}

/// Texel centers sit at `((i + 0.5)/W, 1 − (j + 0.5)/H)`; lookups clamp to the edge.
#[inline]
pub fn footprint(u: f64, v: f64, width: usize, height: usize) -> Footprint {
    let (x, dx_du) = texel_coord(u * width as f64 - 0.5, width, width as f64);
    let (y, dy_dv) = texel_coord((1.0 - v) * height as f64 - 0.5, height, -(height as f64));
    let x0 = (x.floor() as usize).min(width.saturating_sub(2));
    let y0 = (y.floor() as usize).min(height.saturating_sub(2));
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = if width > 1 { x - x0 as f64 } else { 0.0 };
    let fy = if height > 1 { y - y0 as f64 } else { 0.0 };
    Footprint {
        texels: [y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1],
        weights: [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ],
        fx,
        fy,
        dx_du: if width > 1 { dx_du } else { 0.0 },
        dy_dv: if height > 1 { dy_dv } else { 0.0 },
    }
}

#[inline]
fn texel_coord(raw: f64, size: usize, scale: f64) -> (f64, f64) {
    let hi = (size - 1) as f64;
    if raw < 0.0 {
        (0.0, 0.0)
    } else if raw > hi {
        (hi, 0.0)
    } else {
        (raw, scale)
    }
}

impl Footprint {
    #[inline]
    pub fn sample(&self, texture: &Image, c: usize) -> f64 {
        let ch = texture.channels;
        let t = &texture.data;
        self.weights[0] * t[self.texels[0] * ch + c]
            + self.weights[1] * t[self.texels[1] * ch + c]
            + self.weights[2] * t[self.texels[2] * ch + c]
            + self.weights[3] * t[self.texels[3] * ch + c]
    }

    /// `(∂sample/∂u, ∂sample/∂v)` for channel `c`.
    #[inline]
    pub fn gradient(&self, texture: &Image, c: usize) -> (f64, f64) {
        let ch = texture.channels;
        let t = |k: usize| texture.data[self.texels[k] * ch + c];
        let d_dx = (t(1) - t(0)) * (1.0 - self.fy) + (t(3) - t(2)) * self.fy;
        let d_dy = (t(2) - t(0)) * (1.0 - self.fx) + (t(3) - t(1)) * self.fx;
        (d_dx * self.dx_du, d_dy * self.dy_dv)
    }
}

/// Interpolated UV at a covered pixel.
#[inline]
pub fn interpolate_uv(uv: &[[f64; 2]], tri: &[u32; 3], b: &[f64; 3]) -> [f64; 2] {
    let [a, bb, c] = tri.map(|i| uv[i as usize]);
    [
        b[0] * a[0] + b[1] * bb[0] + b[2] * c[0],
        b[0] * a[1] + b[1] * bb[1] + b[2] * c[1],
    ]
}

/// Samples `texture` at every covered pixel; uncovered pixels are zero.
pub fn sample_texture(
    gbuf: &GBuffer,
    triangles: &[[u32; 3]],
    uv: &[[f64; 2]],
    texture: &Image,
) -> (Image, Mask) {
    let ch = texture.channels;
    let mut out = Image::new(gbuf.width, gbuf.height, ch);
    for i in 0..gbuf.triangle.len() {
        let t = gbuf.triangle[i];
        if t == EMPTY {
            continue;
        }
        let [u, v] = interpolate_uv(uv, &triangles[t as usize], &gbuf.bary[i]);
        let fp = footprint(u, v, texture.width, texture.height);
        for c in 0..ch {
            out.data[i * ch + c] = fp.sample(texture, c);
        }
    }
    (out, gbuf.mask())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(w: usize, h: usize) -> Camera {
        Camera::centered(w, h, 10.0)
    }

    #[test]
    fn zero_area_triangle_draws_nothing() {
        let screen = [[0.0, 0.0, 1.0], [2.0, 2.0, 1.0], [4.0, 4.0, 1.0]];
        let g = rasterize(&screen, &[[0, 1, 2]], &cam(4, 4), &RasterOptions::default());
        assert_eq!(g.coverage(), 0);
    }

    #[test]
    fn half_image_triangle() {
        // Counter-clockwise on screen (y down): top-left, bottom-left, bottom-right.
        let screen = [[0.0, 0.0, 1.0], [0.0, 4.0, 1.0], [4.0, 4.0, 1.0]];
        let g = rasterize(&screen, &[[0, 1, 2]], &cam(4, 4), &RasterOptions::default());
        // Centers with x + 0.5 <= y + 0.5, i.e. x <= y.
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(g.covered(y * 4 + x), x <= y, "pixel {x},{y}");
            }
        }
    }

    #[test]
    fn clockwise_triangles_are_culled() {
        let screen = [[0.0, 0.0, 1.0], [4.0, 4.0, 1.0], [0.0, 4.0, 1.0]];
        let g = rasterize(&screen, &[[0, 1, 2]], &cam(4, 4), &RasterOptions::default());
        assert_eq!(g.coverage(), 0);
        let g = rasterize(&screen, &[[0, 1, 2]], &cam(4, 4), &RasterOptions { cull_backfaces: false });
        assert_eq!(g.coverage(), 10);
    }

    #[test]
    fn nearer_triangle_wins() {
        let screen = [
            [0.0, 0.0, 2.0],
            [0.0, 8.0, 2.0],
            [8.0, 8.0, 2.0],
            [0.0, 0.0, 1.0],
            [0.0, 8.0, 1.0],
            [8.0, 8.0, 1.0],
        ];
        let g = rasterize(&screen, &[[0, 1, 2], [3, 4, 5]], &cam(8, 8), &RasterOptions::default());
        for i in 0..64 {
            if g.covered(i) {
                assert_eq!(g.triangle[i], 1);
                assert_eq!(g.depth[i], 1.0);
            }
        }
    }

    #[test]
    fn behind_camera_triangle_is_culled() {
        let screen = [[0.0, 0.0, -1.0], [0.0, 4.0, 1.0], [4.0, 4.0, 1.0]];
        let g = rasterize(&screen, &[[0, 1, 2]], &cam(4, 4), &RasterOptions::default());
        assert_eq!(g.coverage(), 0);
    }

    #[test]
    fn footprint_at_texel_center_is_a_delta() {
        let tex = Image::from_fn(4, 4, 1, |x, y, _| (x * 10 + y) as f64);
        // Texel (2, 1): u = 2.5/4, v = 1 − 1.5/4.
        let fp = footprint(2.5 / 4.0, 1.0 - 1.5 / 4.0, 4, 4);
        assert_eq!(fp.sample(&tex, 0), 21.0);
    }

    #[test]
    fn footprint_clamps_to_edge() {
        let tex = Image::from_fn(4, 4, 1, |x, y, _| (x * 10 + y) as f64);
        let fp = footprint(-0.3, 2.0, 4, 4);
        assert_eq!(fp.sample(&tex, 0), 0.0);
        assert_eq!(fp.dx_du, 0.0);
        let fp = footprint(1.0, 0.0, 4, 4);
        assert_eq!(fp.sample(&tex, 0), 33.0);
    }
}
