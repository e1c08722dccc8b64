//! End-to-end experiments: configuration, the tick loop and report tables.

mod compare;
mod config;
mod runner;

pub use compare::{compare_reports, ComparisonRow, ComparisonTable};
pub use config::{
    obstacle_profile, obstacle_scene, CameraSet, MappingConfig, OdometryConfig, PolicyConfig, Rates, ScenarioConfig,
    ScenarioKind, StepSweepConfig, TrackingSweepConfig,
};
pub use runner::{estimate_odometry, run_mapping, run_scenario, write_reports, MappingRun, RunOutput};

use thiserror::Error;

use crate::elevmap::MapError;
use crate::eval::EvalError;
use crate::odometry::EkfError;
use crate::scene::SceneError;
use crate::sensorsim::{CameraError, TrajectoryError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("odometry: {0}")]
    Ekf(#[from] EkfError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
