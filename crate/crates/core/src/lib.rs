//! Perception stack for a small quadruped walking over stepped terrain.
//!
//! The crate covers the whole loop at desk scale: parametric terrain,
//! ray-cast depth cameras, point-cloud preprocessing, a robot-centric 2.5D
//! elevation map with per-cell Kalman fusion and vertical drift
//! compensation, an EKF fusing estimator velocity, IMU orientation and an
//! optional VIO pose, the policy observation and reward terms, and the
//! evaluation metrics (one-way Chamfer distance, relative trajectory error,
//! command tracking RMS).
//!
//! Everything is deterministic given a seed. [`scenario`] ties the modules
//! together into runnable experiments.

pub mod cloudfilter;
pub mod elevmap;
pub mod eval;
pub mod geometry;
pub mod kdtree;
pub mod obsbuilder;
pub mod odometry;
pub mod reward;
pub mod rng;
pub mod scenario;
pub mod scene;
pub mod sensorsim;

pub use cloudfilter::{Frame, PointCloud, SensorId};
pub use elevmap::ElevationMap;
pub use geometry::Pose;
pub use scene::Heightfield;
pub use sensorsim::RobotState;
