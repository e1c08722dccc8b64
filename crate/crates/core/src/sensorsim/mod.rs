//! Kinematic robot motion and simulated depth cameras.

mod camera;
mod trajectory;

pub use camera::{
    inject_sensor_noise, render_depth, CameraError, CameraModel, NoiseModel, RenderDiagnostic, RenderOutput,
};
pub use trajectory::{
    simulate_trajectory, CommandProfile, CommandSegment, GaitParams, StartPose, Trajectory, TrajectoryError,
};

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

/// Ground-truth robot state at one simulation tick.
///
/// Legs are ordered FL, FR, RL, RR with three joints each (hip, thigh, calf).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub t: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    /// Body-frame linear velocity.
    pub linear_velocity: Vector3<f64>,
    /// Body-frame angular velocity.
    pub angular_velocity: Vector3<f64>,
    pub joint_positions: [f64; 12],
    pub joint_velocities: [f64; 12],
    pub joint_accelerations: [f64; 12],
    pub foot_contacts: [bool; 4],
    /// Time since lift-off; zero while in contact.
    pub foot_air_times: [f64; 4],
    /// True on the tick a foot touches down.
    pub first_contact: [bool; 4],
    /// Duration of each foot's most recently completed swing.
    pub last_air_times: [f64; 4],
    /// Trunk height above the terrain under the feet.
    pub trunk_height: f64,
}

impl RobotState {
    pub fn pose(&self) -> Pose {
        Pose::from_parts(self.position.into(), self.orientation)
    }

    /// Gravity direction expressed in the body frame.
    pub fn projected_gravity(&self) -> Vector3<f64> {
        self.orientation.inverse() * Vector3::new(0.0, 0.0, -1.0)
    }
}
