//! Rigid pose and pinhole camera.

#[allow(unused_imports)]
use crate::float::Float;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3};

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Rotation as an axis-angle vector (radians · unit axis) plus translation,
/// mapping model coordinates to camera coordinates: `v' = R·v + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Vec3,
    pub translation: Vec3,
}

impl Default for RigidPose {
    fn default() -> Self {
        RigidPose {
            rotation: Vec3::zeros(),
            translation: Vec3::zeros(),
        }
    }
}

impl RigidPose {
    pub fn new(rotation: Vec3, translation: Vec3) -> Self {
        RigidPose {
            rotation,
            translation,
        }
    }

    /// Pose from yaw (about y), pitch (about x) and roll (about z) in radians,
    /// composed as `R = R_z(roll) · R_x(pitch) · R_y(yaw)`.
    pub fn from_euler(yaw: f64, pitch: f64, roll: f64, translation: Vec3) -> Self {
        let r = Rotation3::from_axis_angle(&Vec3::z_axis(), roll)
            * Rotation3::from_axis_angle(&Vec3::x_axis(), pitch)
            * Rotation3::from_axis_angle(&Vec3::y_axis(), yaw);
        RigidPose {
            rotation: r.scaled_axis(),
            translation,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rotation_matrix(&self.rotation)
    }

    #[inline]
    pub fn transform(&self, r: &Matrix3<f64>, v: &Vec3) -> Vec3 {
        r * v + self.translation
    }

    /// Same rotation with angle in `[0, π]`.
    pub fn canonical(&self) -> Self {
        let theta = self.rotation.norm();
        if theta <= PI {
            return *self;
        }
        let axis = self.rotation / theta;
        let mut angle = theta % (2.0 * PI);
        let mut axis = axis;
        if angle > PI {
            angle = 2.0 * PI - angle;
            axis = -axis;
        }
        RigidPose {
            rotation: axis * angle,
            translation: self.translation,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }
}

/// Rodrigues' formula.
pub fn rotation_matrix(omega: &Vec3) -> Matrix3<f64> {
    Rotation3::from_scaled_axis(*omega).into_inner()
}

pub(crate) fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Partial derivatives `∂R/∂ω_i` of the rotation matrix w.r.t. the axis-angle vector.
pub fn rotation_derivatives(omega: &Vec3) -> [Matrix3<f64>; 3] {
    let theta2 = omega.norm_squared();
    let basis = [Vec3::x(), Vec3::y(), Vec3::z()];
    if theta2 < 1e-16 {
        return basis.map(|e| skew(&e));
    }
    let r = rotation_matrix(omega);
    let w = skew(omega);
    let i_minus_r = Matrix3::identity() - r;
    basis.map(|e| {
        let rhs = omega.cross(&(i_minus_r * e));
        (w * omega.dot(&e) + skew(&rhs)) * r / theta2
    })
}

/// Geodesic angle between two rotations, radians.
pub fn geodesic_angle(a: &Vec3, b: &Vec3) -> f64 {
    let ra = Rotation3::from_scaled_axis(*a);
    let rb = Rotation3::from_scaled_axis(*b);
    ra.angle_to(&rb)
}

/// Pinhole camera in pixels; screen = focal·(x/z, y/z) + principal point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub focal: f64,
    pub principal: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    /// Principal point at the image center.
    pub fn centered(width: usize, height: usize, focal: f64) -> Self {
        Camera {
            focal,
            principal: [width as f64 / 2.0, height as f64 / 2.0],
            width,
            height,
            near: 0.1,
            far: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(Error::InvalidInput("camera focal must be positive".into()));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::InvalidInput("camera needs 0 < near < far".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("camera image size must be non-zero".into()));
        }
        Ok(())
    }
}

/// Per-vertex projection: camera-space points and screen `(x, y, z)`.
#[derive(Debug, Clone)]
pub struct Projection {
    pub camera_points: Vec<Vec3>,
    pub screen: Vec<[f64; 3]>,
    /// Vertices with camera z below the near plane.
    pub behind: Vec<u32>,
}

pub fn project(vertices: &[Vec3], pose: &RigidPose, cam: &Camera) -> Projection {
    let r = pose.rotation_matrix();
    let mut camera_points = Vec::with_capacity(vertices.len());
    let mut screen = Vec::with_capacity(vertices.len());
    let mut behind = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        let p = pose.transform(&r, v);
        if p.z < cam.near {
            behind.push(i as u32);
        }
        screen.push(project_point(&p, cam));
        camera_points.push(p);
    }
    Projection {
        camera_points,
        screen,
        behind,
    }
}

#[inline]
pub fn project_point(p: &Vec3, cam: &Camera) -> [f64; 3] {
    [
        cam.focal * (p.x / p.z) + cam.principal[0],
        cam.focal * (p.y / p.z) + cam.principal[1],
        p.z,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optical_axis_hits_principal_point() {
        let cam = Camera::centered(64, 48, 100.0);
        let p = project(&[Vec3::new(0.0, 0.0, 3.0)], &RigidPose::default(), &cam);
        assert_eq!(p.screen[0], [32.0, 24.0, 3.0]);
        assert!(p.behind.is_empty());
    }

    #[test]
    fn translation_along_z_scales_extent() {
        let cam = Camera::centered(64, 64, 100.0);
        let v = [Vec3::new(0.5, 0.0, 2.0)];
        let near = project(&v, &RigidPose::default(), &cam);
        let pose = RigidPose::new(Vec3::zeros(), Vec3::new(0.0, 0.0, 3.0));
        let far = project(&v, &pose, &cam);
        let ratio = (far.screen[0][0] - 32.0) / (near.screen[0][0] - 32.0);
        assert!((ratio - 2.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_about_z_rotates_screen_offset() {
        let cam = Camera::centered(64, 64, 100.0);
        let v = [Vec3::new(0.25, 0.0, 2.0)];
        let pose = RigidPose::new(Vec3::new(0.0, 0.0, PI / 2.0), Vec3::zeros());
        let p = project(&v, &pose, &cam);
        // Oracle: explicit R_z(π/2) = [[0,-1,0],[1,0,0],[0,0,1]] applied to the vertex.
        let rotated = Vec3::new(0.0 * 0.25 - 1.0 * 0.0, 1.0 * 0.25 + 0.0 * 0.0, 2.0);
        let u = 100.0 * 0.25 / 2.0;
        assert!((p.screen[0][0] - (32.0 + 100.0 * rotated.x / 2.0)).abs() < 1e-12);
        assert!((p.screen[0][0] - 32.0).abs() < 1e-12);
        assert!((p.screen[0][1] - (32.0 + u)).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_vertices_are_flagged() {
        let cam = Camera::centered(8, 8, 10.0);
        let p = project(&[Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 1.0)], &RigidPose::default(), &cam);
        assert_eq!(p.behind, [0]);
    }

    #[test]
    fn rotation_derivatives_match_finite_differences() {
        for omega in [Vec3::new(0.3, -0.2, 0.5), Vec3::new(1e-9, 0.0, 0.0), Vec3::new(0.0, 2.5, 0.1)] {
            let d = rotation_derivatives(&omega);
            for i in 0..3 {
                let h = 1e-6;
                let mut p = omega;
                p[i] += h;
                let mut m = omega;
                m[i] -= h;
                let fd = (rotation_matrix(&p) - rotation_matrix(&m)) / (2.0 * h);
                assert!((fd - d[i]).norm() < 1e-8, "omega {omega:?} axis {i}");
            }
        }
    }

    #[test]
    fn canonical_keeps_rotation() {
        let pose = RigidPose::new(Vec3::new(0.0, 5.0, 0.0), Vec3::zeros());
        let c = pose.canonical();
        assert!(c.rotation.norm() <= PI);
        assert!((pose.rotation_matrix() - c.rotation_matrix()).norm() < 1e-12);
    }

    #[test]
    fn euler_yaw_turns_about_vertical_axis() {
        let pose = RigidPose::from_euler(0.3, 0.0, 0.0, Vec3::zeros());
        let axis = pose.rotation.normalize();
        assert!((axis.y.abs() - 1.0).abs() < 1e-12);
        assert!((pose.rotation.norm() - 0.3).abs() < 1e-12);
    }
}
