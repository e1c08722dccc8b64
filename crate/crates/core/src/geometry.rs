//! Frames, poses and capsule primitives shared across the pipeline.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform from a child frame into its parent (usually base → world).
pub type Pose = Isometry3<f64>;

pub fn pose_from_xyz_rpy(xyz: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Pose {
    Isometry3::from_parts(
        Translation3::from(xyz),
        UnitQuaternion::from_euler_angles(roll, pitch, yaw),
    )
}

/// Heading angle of an orientation (ZYX convention).
pub fn yaw_of(q: &UnitQuaternion<f64>) -> f64 {
    q.euler_angles().2
}

pub fn rotate2(angle: f64, v: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Mounting of a sensor on the trunk, as translation plus roll/pitch/yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MountPose {
    pub translation: [f64; 3],
    /// Roll, pitch, yaw in radians. Positive pitch tilts the optical axis downwards.
    pub rpy: [f64; 3],
}

impl MountPose {
    pub fn to_pose(&self) -> Pose {
        let [x, y, z] = self.translation;
        pose_from_xyz_rpy(Vector3::new(x, y, z), self.rpy[0], self.rpy[1], self.rpy[2])
    }
}

/// Line segment swept by a sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub radius: f64,
}

impl Capsule {
    pub fn new(a: Point3<f64>, b: Point3<f64>, radius: f64) -> Self {
        Self { a, b, radius }
    }

    /// Distance from `p` to the capsule axis segment.
    pub fn axis_distance(&self, p: &Point3<f64>) -> f64 {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        let t = if len2 > 0.0 {
            ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (p - (self.a + ab * t)).norm()
    }

    /// Smallest non-negative ray parameter at which `origin + t * dir` meets
    /// the capsule surface. `dir` must be unit length.
    pub fn ray_intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let ba = self.b - self.a;
        let oa = origin - self.a;
        let r = self.radius;
        let baba = ba.dot(&ba);
        let bard = ba.dot(dir);
        let baoa = ba.dot(&oa);
        let rdoa = dir.dot(&oa);
        let oaoa = oa.dot(&oa);
        let a = baba - bard * bard;
        let b = baba * rdoa - baoa * bard;
        let c = baba * oaoa - baoa * baoa - r * r * baba;
        if a > 1e-12 {
            let h = b * b - a * c;
            if h >= 0.0 {
                let t = (-b - h.sqrt()) / a;
                let y = baoa + t * bard;
                if y > 0.0 && y < baba && t >= 0.0 {
                    return Some(t);
                }
            }
        }
        // end caps
        let sphere = |center: Point3<f64>| -> Option<f64> {
            let oc = origin - center;
            let b = oc.dot(dir);
            let c = oc.dot(&oc) - r * r;
            let h = b * b - c;
            if h < 0.0 {
                return None;
            }
            let t = -b - h.sqrt();
            (t >= 0.0).then_some(t)
        };
        match (sphere(self.a), sphere(self.b)) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-12);
        assert!((wrap_angle(2.0 * PI + 0.1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn positive_pitch_points_axis_down() {
        let m = MountPose { translation: [0.0; 3], rpy: [0.0, PI / 3.0, 0.0] };
        let axis = m.to_pose().rotation * Vector3::x();
        assert!(axis.z < 0.0);
        assert!((axis.z + (PI / 3.0).sin()).abs() < 1e-12);
    }

    #[test]
    fn ray_hits_capsule_side_and_cap() {
        let c = Capsule::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), 0.1);
        let t = c
            .ray_intersect(&Point3::new(0.5, 0.0, 1.0), &Vector3::new(0.0, 0.0, -1.0))
            .unwrap();
        assert!((t - 0.9).abs() < 1e-12);
        let t = c
            .ray_intersect(&Point3::new(2.0, 0.0, 0.0), &Vector3::new(-1.0, 0.0, 0.0))
            .unwrap();
        assert!((t - 0.9).abs() < 1e-12);
        assert!(c
            .ray_intersect(&Point3::new(0.5, 0.5, 1.0), &Vector3::new(0.0, 0.0, -1.0))
            .is_none());
    }

    #[test]
    fn ray_intersection_lies_on_surface() {
        let c = Capsule::new(Point3::new(0.1, 0.2, 0.0), Point3::new(0.3, -0.1, 0.4), 0.05);
        let o = Point3::new(1.0, 1.0, 1.0);
        let target = Point3::new(0.2, 0.05, 0.2);
        let dir = (target - o).normalize();
        let t = c.ray_intersect(&o, &dir).unwrap();
        let hit = o + dir * t;
        assert!((c.axis_distance(&hit) - 0.05).abs() < 1e-9);
    }
}
