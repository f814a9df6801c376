//! Procedural head template and deformation samples.
//!
//! The template is a latitude/longitude patch of an ellipsoid with a few
//! facial features added as smooth bumps. Coordinates follow the camera
//! convention used throughout the crate: x right, y down, and the face looks
//! toward −z, so the identity pose shows it frontally.

#[allow(unused_imports)]
use crate::float::Float;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::mesh::{Mesh, Vec3};
use crate::model::{build_from_samples, MorphableModel, SampleKind};

#[derive(Debug, Clone)]
pub struct HeadTemplate {
    /// Longitude samples; odd so the grid is mirror symmetric about x = 0.
    pub columns: usize,
    pub rows: usize,
    /// Longitude half-range in radians.
    pub lon_extent: f64,
    /// Latitude half-range in radians.
    pub lat_extent: f64,
    pub semi_axes: [f64; 3],
}

impl Default for HeadTemplate {
    fn default() -> Self {
        HeadTemplate {
            columns: 57,
            rows: 45,
            lon_extent: 100f64.to_radians(),
            lat_extent: 60f64.to_radians(),
            semi_axes: [0.8, 1.1, 0.95],
        }
    }
}

/// Smooth radial displacement centered at `(lon, lat)`.
#[derive(Debug, Clone, Copy)]
struct Bump {
    lon: f64,
    lat: f64,
    sigma_lon: f64,
    sigma_lat: f64,
    amplitude: f64,
    /// Also place a copy at `-lon`.
    mirrored: bool,
}

impl Bump {
    const fn new(lon: f64, lat: f64, sigma_lon: f64, sigma_lat: f64, amplitude: f64) -> Self {
        Bump {
            lon,
            lat,
            sigma_lon,
            sigma_lat,
            amplitude,
            mirrored: false,
        }
    }

    const fn pair(lon: f64, lat: f64, sigma_lon: f64, sigma_lat: f64, amplitude: f64) -> Self {
        Bump {
            mirrored: true,
            ..Bump::new(lon, lat, sigma_lon, sigma_lat, amplitude)
        }
    }

    fn gauss(&self, dlon: f64, lat: f64) -> f64 {
        let a = dlon / self.sigma_lon;
        let b = (lat - self.lat) / self.sigma_lat;
        (-0.5 * (a * a + b * b)).exp()
    }

    fn eval(&self, lon: f64, lat: f64) -> f64 {
        if self.mirrored {
            // Evaluated on |lon| so mirrored points see bit-identical sums.
            let l = lon.abs();
            self.amplitude * (self.gauss(l - self.lon, lat) + self.gauss(l + self.lon, lat))
        } else {
            self.amplitude * self.gauss(lon - self.lon, lat)
        }
    }
}

pub const MOUTH_LAT: f64 = -0.45;

/// Per-sample deformation parameters; all zero gives the template.
#[derive(Debug, Clone, Default)]
pub struct Deformation {
    pub axis_scale: [f64; 3],
    pub nose: f64,
    pub chin: f64,
    pub cheeks: f64,
    pub brow: f64,
    pub jaw_open: f64,
    pub smile: f64,
    pub brow_raise: f64,
    bumps: Vec<Bump>,
}

impl HeadTemplate {
    pub fn num_vertices(&self) -> usize {
        self.rows * self.columns
    }

    pub fn index(&self, row: usize, col: usize) -> u32 {
        (row * self.columns + col) as u32
    }

    // Integer numerators keep mirrored columns exactly opposite.
    fn lon(&self, col: usize) -> f64 {
        let n = (self.columns - 1) as f64;
        self.lon_extent * (2.0 * col as f64 - n) / n
    }

    /// Row 0 is the top of the patch.
    fn lat(&self, row: usize) -> f64 {
        let n = (self.rows - 1) as f64;
        self.lat_extent * (n - 2.0 * row as f64) / n
    }

    pub fn center_column(&self) -> usize {
        (self.columns - 1) / 2
    }

    /// Row closest to the given latitude.
    pub fn row_at(&self, lat: f64) -> usize {
        let t = (self.lat_extent - lat) / (2.0 * self.lat_extent);
        (t * (self.rows - 1) as f64).round() as usize
    }

    pub fn column_at(&self, lon: f64) -> usize {
        let t = (lon + self.lon_extent) / (2.0 * self.lon_extent);
        (t * (self.columns - 1) as f64).round() as usize
    }

    pub fn triangles(&self) -> Vec<[u32; 3]> {
        let mut tris = Vec::with_capacity(2 * (self.rows - 1) * (self.columns - 1));
        let half = self.center_column();
        for r in 0..self.rows - 1 {
            for c in 0..self.columns - 1 {
                let tl = self.index(r, c);
                let tr = self.index(r, c + 1);
                let bl = self.index(r + 1, c);
                let br = self.index(r + 1, c + 1);
                if c < half {
                    tris.push([tl, bl, br]);
                    tris.push([tl, br, tr]);
                } else {
                    tris.push([tl, bl, tr]);
                    tris.push([tr, bl, br]);
                }
            }
        }
        tris
    }

    pub fn uv(&self) -> Vec<[f64; 2]> {
        let mut uv = Vec::with_capacity(self.num_vertices());
        for r in 0..self.rows {
            for c in 0..self.columns {
                uv.push([
                    c as f64 / (self.columns - 1) as f64,
                    1.0 - r as f64 / (self.rows - 1) as f64,
                ]);
            }
        }
        uv
    }

    /// UV coordinates of a surface point given in (lon, lat) radians.
    pub fn uv_of(&self, lon: f64, lat: f64) -> [f64; 2] {
        [
            (lon + self.lon_extent) / (2.0 * self.lon_extent),
            (lat + self.lat_extent) / (2.0 * self.lat_extent),
        ]
    }

    fn base_features() -> [Bump; 7] {
        [
            // nose ridge and tip
            Bump::new(0.0, 0.02, 0.09, 0.2, 0.16),
            Bump::new(0.0, -0.12, 0.07, 0.07, 0.08),
            // brow ridge
            Bump::pair(0.28, 0.4, 0.16, 0.07, 0.05),
            // eye sockets
            Bump::pair(0.3, 0.26, 0.1, 0.07, -0.06),
            // lips
            Bump::new(0.0, MOUTH_LAT, 0.2, 0.06, 0.03),
            // chin
            Bump::new(0.0, -0.8, 0.2, 0.12, 0.05),
            // forehead
            Bump::new(0.0, 0.75, 0.5, 0.2, 0.02),
        ]
    }

    /// Surface position at a grid vertex under a deformation.
    fn position(&self, row: usize, col: usize, d: &Deformation) -> Vec3 {
        let lon = self.lon(col);
        let lat = self.lat(row);
        let [ax, ay, az] = self.semi_axes;
        let ax = ax * (1.0 + d.axis_scale[0]);
        let ay = ay * (1.0 + d.axis_scale[1]);
        let az = az * (1.0 + d.axis_scale[2]);

        let features = Self::base_features();
        let mut radial = 0.0;
        for (i, f) in features.iter().enumerate() {
            let gain = match i {
                0 | 1 => 1.0 + d.nose,
                2 => 1.0 + d.brow,
                5 => 1.0 + d.chin,
                _ => 1.0,
            };
            radial += gain * f.eval(lon, lat);
        }
        radial += d.cheeks * Bump::pair(0.5, -0.15, 0.18, 0.18, 1.0).eval(lon, lat);
        for b in &d.bumps {
            radial += b.eval(lon, lat);
        }

        let (sl, cl) = (lon.sin(), lon.cos());
        let (sp, cp) = (lat.sin(), lat.cos());
        let dir = Vec3::new(sl * cp, -sp, -cl * cp);
        let mut p = Vec3::new(ax * sl * cp, -ay * sp, -az * cl * cp) + dir * radial;

        // Expressions: jaw drop below the mouth, lip-corner lift, brow lift, and
        // the region inside the lips pushed into the head when the jaw opens.
        if d.jaw_open != 0.0 {
            let below = smoothstep(MOUTH_LAT + 0.02, MOUTH_LAT - 0.12, lat);
            let width = (-0.5 * (lon / 0.6).powi(2)).exp();
            p.y += d.jaw_open * 0.18 * below * width;
            let inner = Bump::new(0.0, MOUTH_LAT, 0.12, 0.035, 1.0).eval(lon, lat);
            p.z += d.jaw_open * 0.12 * inner;
        }
        if d.smile != 0.0 {
            let corners = Bump::pair(0.2, MOUTH_LAT, 0.08, 0.06, 1.0).eval(lon, lat);
            p.y -= d.smile * 0.05 * corners;
            p.x += d.smile * 0.03 * corners * lon.signum();
        }
        if d.brow_raise != 0.0 {
            let brows = Bump::new(0.0, 0.4, 0.4, 0.1, 1.0).eval(lon, lat);
            p.y -= d.brow_raise * 0.05 * brows;
        }
        p
    }

    pub fn mesh(&self, d: &Deformation) -> Mesh {
        let mut vertices = Vec::with_capacity(self.num_vertices());
        for r in 0..self.rows {
            for c in 0..self.columns {
                vertices.push(self.position(r, c, d));
            }
        }
        Mesh {
            vertices,
            triangles: self.triangles(),
            uv: self.uv(),
        }
    }

    /// Ordered boundary of the inner-lip region, traced around the mouth center.
    pub fn mouth_loop(&self) -> Vec<u32> {
        let center = self.center_column();
        let row = self.row_at(MOUTH_LAT);
        let (c0, c1) = (center - 3, center + 3);
        let (r0, r1) = (row - 1, row + 1);
        let mut out = Vec::new();
        for c in c0..=c1 {
            out.push(self.index(r0, c));
        }
        for r in r0 + 1..=r1 {
            out.push(self.index(r, c1));
        }
        for c in (c0..c1).rev() {
            out.push(self.index(r1, c));
        }
        for r in (r0 + 1..r1).rev() {
            out.push(self.index(r, c0));
        }
        out
    }

    /// Vertex indices used as 2D landmarks: brows, eye corners, nose, mouth, chin, jaw.
    pub fn landmark_vertices(&self) -> Vec<u32> {
        let spots: [(f64, f64); 19] = [
            (-0.42, 0.4),
            (-0.15, 0.42),
            (0.15, 0.42),
            (0.42, 0.4),
            (-0.45, 0.26),
            (-0.15, 0.26),
            (0.15, 0.26),
            (0.45, 0.26),
            (0.0, 0.1),
            (0.0, -0.12),
            (-0.15, -0.2),
            (0.15, -0.2),
            (-0.22, MOUTH_LAT),
            (0.22, MOUTH_LAT),
            (0.0, -0.8),
            (-0.6, -0.7),
            (0.6, -0.7),
            (-1.2, 0.0),
            (1.2, 0.0),
        ];
        spots
            .iter()
            .map(|&(lon, lat)| self.index(self.row_at(lat), self.column_at(lon)))
            .collect()
    }
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

fn random_bumps(rng: &mut ChaCha8Rng, count: usize, amplitude: f64) -> Vec<Bump> {
    (0..count)
        .map(|_| {
            Bump::new(
                rng.random_range(-1.3..1.3),
                rng.random_range(-0.9..0.9),
                rng.random_range(0.15..0.45),
                rng.random_range(0.15..0.45),
                normal(rng, amplitude),
            )
        })
        .collect()
}

/// Random identity deformation.
pub fn random_identity(rng: &mut ChaCha8Rng) -> Deformation {
    Deformation {
        axis_scale: [normal(rng, 0.05), normal(rng, 0.05), normal(rng, 0.05)],
        nose: normal(rng, 0.25),
        chin: normal(rng, 0.3),
        cheeks: normal(rng, 0.03),
        brow: normal(rng, 0.3),
        bumps: random_bumps(rng, 4, 0.02),
        ..Deformation::default()
    }
}

/// Adds a random expression on top of an identity.
pub fn random_expression(rng: &mut ChaCha8Rng, identity: &Deformation) -> Deformation {
    let mut d = identity.clone();
    d.jaw_open = rng.random_range(0.0..1.0);
    d.smile = normal(rng, 0.6);
    d.brow_raise = normal(rng, 0.6);
    d.bumps.extend(random_bumps(rng, 2, 0.008));
    d
}

/// Training meshes: `identities` neutral meshes, each followed by one expressive mesh.
pub fn training_samples(
    template: &HeadTemplate,
    identities: usize,
    seed: u64,
) -> (Vec<Mesh>, Vec<SampleKind>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut meshes = Vec::with_capacity(2 * identities);
    let mut kinds = Vec::with_capacity(2 * identities);
    for _ in 0..identities {
        let id = random_identity(&mut rng);
        let ex = random_expression(&mut rng, &id);
        kinds.push(SampleKind::Neutral);
        meshes.push(template.mesh(&id));
        kinds.push(SampleKind::Expressive {
            neutral: meshes.len() - 1,
        });
        meshes.push(template.mesh(&ex));
    }
    (meshes, kinds)
}

/// Desk-scale default model built from procedural samples.
pub fn default_model(identities: usize, k_shape: usize, k_expr: usize, seed: u64) -> Result<MorphableModel> {
    let template = HeadTemplate::default();
    let (meshes, kinds) = training_samples(&template, identities, seed);
    build_from_samples(&meshes, &kinds, k_shape, k_expr, template.mouth_loop())
}

/// Longitude of the mirror column, for tests on symmetric geometry.
pub fn mirror_column(template: &HeadTemplate, col: usize) -> usize {
    template.columns - 1 - col
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::vertex_normals;

    #[test]
    fn template_is_valid_and_mirror_symmetric() {
        let t = HeadTemplate::default();
        let mesh = t.mesh(&Deformation::default());
        mesh.validate().unwrap();
        assert_eq!(mesh.num_vertices(), 57 * 45);
        for r in 0..t.rows {
            for c in 0..t.columns {
                let a = mesh.vertices[t.index(r, c) as usize];
                let b = mesh.vertices[t.index(r, mirror_column(&t, c)) as usize];
                assert_eq!(a.x, -b.x);
                assert_eq!(a.y, b.y);
                assert_eq!(a.z, b.z);
            }
        }
    }

    #[test]
    fn front_faces_look_at_the_camera() {
        let t = HeadTemplate::default();
        let mesh = t.mesh(&Deformation::default());
        let n = vertex_normals(&mesh.vertices, &mesh.triangles);
        let center = t.index(t.row_at(0.5), t.center_column()) as usize;
        assert!(n.normals[center].z < -0.8, "{:?}", n.normals[center]);
        let side = t.index(t.row_at(0.0), t.column_at(1.2)) as usize;
        assert!(n.normals[side].x > 0.5, "{:?}", n.normals[side]);
    }

    #[test]
    fn mouth_loop_is_closed_ring() {
        let t = HeadTemplate::default();
        let ring = t.mouth_loop();
        assert_eq!(ring.len(), 16);
        let mut sorted = ring.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ring.len());
    }
}
