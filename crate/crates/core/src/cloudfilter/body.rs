use nalgebra::{Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::geometry::{Capsule, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    Trunk,
    Thigh,
    Calf,
    Foot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCapsule {
    pub kind: LinkKind,
    /// Leg index (FL, FR, RL, RR) or `None` for the trunk.
    pub leg: Option<usize>,
    pub capsule: Capsule,
}

/// Capsule approximation of a 12-DoF quadruped (Go1-sized by default).
///
/// Legs are ordered FL, FR, RL, RR; joints per leg are hip abduction
/// (about x), thigh and calf (about y). A thigh angle of zero points the leg
/// straight down; positive angles swing the foot backwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyModel {
    pub trunk_half_length: f64,
    pub trunk_radius: f64,
    /// Hip joint x offset from the base origin (front legs +, rear legs -).
    pub hip_x: f64,
    pub hip_y: f64,
    /// Lateral offset from hip joint to thigh joint.
    pub thigh_offset: f64,
    pub thigh_length: f64,
    pub calf_length: f64,
    pub thigh_radius: f64,
    pub calf_radius: f64,
    pub foot_radius: f64,
}

impl Default for BodyModel {
    fn default() -> Self {
        Self {
            trunk_half_length: 0.13,
            trunk_radius: 0.055,
            hip_x: 0.1881,
            hip_y: 0.04675,
            thigh_offset: 0.08,
            thigh_length: 0.213,
            calf_length: 0.213,
            thigh_radius: 0.025,
            calf_radius: 0.016,
            foot_radius: 0.02,
        }
    }
}

/// Leg sign conventions: (front = +1 / rear = -1, left = +1 / right = -1).
pub(crate) const LEG_SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

impl BodyModel {
    /// Foot centre in the base frame.
    pub fn foot_position(&self, leg: usize, q: &[f64; 12]) -> Point3<f64> {
        self.leg_points(leg, q)[2]
    }

    /// Thigh joint, knee and foot positions in the base frame.
    fn leg_points(&self, leg: usize, q: &[f64; 12]) -> [Point3<f64>; 3] {
        let (fx, sy) = LEG_SIGNS[leg];
        let (q0, q1, q2) = (q[3 * leg], q[3 * leg + 1], q[3 * leg + 2]);
        let hip = Point3::new(fx * self.hip_x, sy * self.hip_y, 0.0);
        let abduct = Rotation3::from_axis_angle(&Vector3::x_axis(), q0);
        let thigh_origin = hip + abduct * Vector3::new(0.0, sy * self.thigh_offset, 0.0);
        let thigh_rot = abduct * Rotation3::from_axis_angle(&Vector3::y_axis(), q1);
        let knee = thigh_origin + thigh_rot * Vector3::new(0.0, 0.0, -self.thigh_length);
        let calf_rot = abduct * Rotation3::from_axis_angle(&Vector3::y_axis(), q1 + q2);
        let foot = knee + calf_rot * Vector3::new(0.0, 0.0, -self.calf_length);
        [thigh_origin, knee, foot]
    }

    /// Poses every link capsule in the world via forward kinematics.
    pub fn pose(&self, base: &Pose, q: &[f64; 12]) -> PosedBody {
        let mut links = Vec::with_capacity(13);
        links.push(LinkCapsule {
            kind: LinkKind::Trunk,
            leg: None,
            capsule: Capsule::new(
                base * Point3::new(-self.trunk_half_length, 0.0, 0.0),
                base * Point3::new(self.trunk_half_length, 0.0, 0.0),
                self.trunk_radius,
            ),
        });
        for leg in 0..4 {
            let [hip, knee, foot] = self.leg_points(leg, q).map(|p| base * p);
            links.push(LinkCapsule {
                kind: LinkKind::Thigh,
                leg: Some(leg),
                capsule: Capsule::new(hip, knee, self.thigh_radius),
            });
            links.push(LinkCapsule {
                kind: LinkKind::Calf,
                leg: Some(leg),
                capsule: Capsule::new(knee, foot, self.calf_radius),
            });
            links.push(LinkCapsule {
                kind: LinkKind::Foot,
                leg: Some(leg),
                capsule: Capsule::new(foot, foot, self.foot_radius),
            });
        }
        PosedBody::new(links)
    }
}

/// Link capsules at one instant, in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedBody {
    pub links: Vec<LinkCapsule>,
    lo: Point3<f64>,
    hi: Point3<f64>,
}

impl PosedBody {
    pub fn new(links: Vec<LinkCapsule>) -> Self {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for l in &links {
            let c = &l.capsule;
            for p in [c.a, c.b] {
                lo = lo.inf(&(p - Vector3::repeat(c.radius)));
                hi = hi.sup(&(p + Vector3::repeat(c.radius)));
            }
        }
        Self { links, lo, hi }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn contains(&self, p: &Point3<f64>, margin: f64) -> bool {
        let m = Vector3::repeat(margin);
        if !(p >= &(self.lo - m) && p <= &(self.hi + m)) {
            return false;
        }
        self.links
            .iter()
            .any(|l| l.capsule.axis_distance(p) <= l.capsule.radius + margin)
    }

    /// Nearest intersection of a ray with any link.
    pub fn ray_intersect(&self, origin: &Point3<f64>, dir: &nalgebra::Vector3<f64>) -> Option<f64> {
        self.links
            .iter()
            .filter_map(|l| l.capsule.ray_intersect(origin, dir))
            .min_by(f64::total_cmp)
    }
}

/// Drops every point within `radius + margin` of a posed link capsule.
/// The cloud and body must be expressed in the same frame.
pub fn body_filter(cloud: &PointCloud, body: &PosedBody, margin: f64) -> PointCloud {
    let kept = cloud
        .points
        .iter()
        .filter(|p| !body.contains(p, margin))
        .copied()
        .collect();
    cloud.with_points(kept)
}
