//! Odometry sources and their loosely-coupled EKF fusion.

mod ekf;
mod sources;

pub use ekf::{
    ekf_predict, ekf_update_pose, ekf_update_velocity, Cov9, EkfConfig, EkfError, EkfState, UpdateOutcome,
};
pub use sources::{
    make_source_streams, EstimatorErrors, EstimatorSample, ImuErrors, ImuSample, SourceErrorModel, SourceRates,
    SourceStreams, VioErrors, VioSample,
};

use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::sensorsim::RobotState;

/// Where the mapping pipeline gets its pose from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OdometryMode {
    Gt,
    EkfVio,
    EkfNovio,
}

impl OdometryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OdometryMode::Gt => "gt",
            OdometryMode::EkfVio => "ekf-vio",
            OdometryMode::EkfNovio => "ekf-novio",
        }
    }
}

impl FromStr for OdometryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gt" => Ok(OdometryMode::Gt),
            "ekf-vio" => Ok(OdometryMode::EkfVio),
            "ekf-novio" => Ok(OdometryMode::EkfNovio),
            other => Err(format!("unknown odometry mode '{other}' (expected gt, ekf-vio or ekf-novio)")),
        }
    }
}

/// One estimated pose per input tick.
#[derive(Debug, Clone, PartialEq)]
pub struct OdometrySample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    /// World-frame velocity.
    pub velocity: Vector3<f64>,
}

impl OdometrySample {
    pub fn pose(&self) -> Pose {
        Pose::from_parts(self.position.into(), self.orientation)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusedTrajectory {
    pub samples: Vec<OdometrySample>,
    pub rejected_velocity: usize,
    pub rejected_pose: usize,
}

impl FusedTrajectory {
    /// Ground truth passed through unchanged.
    pub fn from_ground_truth(gt: &[RobotState]) -> Self {
        let samples = gt
            .iter()
            .map(|s| OdometrySample {
                t: s.t,
                position: s.position,
                orientation: s.orientation,
                velocity: s.orientation * s.linear_velocity,
            })
            .collect();
        Self { samples, ..Default::default() }
    }

    /// Adds a vertical drift growing linearly with time since the first sample.
    pub fn with_z_drift(mut self, rate: f64) -> Self {
        if let Some(t0) = self.samples.first().map(|s| s.t) {
            for s in &mut self.samples {
                s.position.z += rate * (s.t - t0);
                s.velocity.z += rate;
            }
        }
        self
    }

    /// CSV with columns t, position, quaternion (w, x, y, z), velocity.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz")?;
        for s in &self.samples {
            let q = s.orientation.quaternion();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.t, s.position.x, s.position.y, s.position.z, q.w, q.i, q.j, q.k, s.velocity.x, s.velocity.y,
                s.velocity.z
            )?;
        }
        Ok(())
    }
}

/// Runs the filter over the merged streams, initialised from the first
/// ground-truth state.
///
/// Per IMU tick: predict, then any estimator sample now due, then any VIO
/// sample now due. Passing `use_vio = false` only skips the pose updates.
pub fn fuse(
    initial: &RobotState,
    streams: &SourceStreams,
    use_vio: bool,
    cfg: &EkfConfig,
) -> Result<FusedTrajectory, EkfError> {
    let mut state = EkfState::new(
        initial.t,
        initial.position,
        initial.orientation * initial.linear_velocity,
        initial.orientation,
        cfg,
    );
    let mut out = FusedTrajectory::default();
    let mut est_i = 0;
    let mut vio_i = 0;
    let due = |t: f64, now: f64| t <= now + 1e-9;

    let record = |s: &EkfState, out: &mut FusedTrajectory| {
        out.samples.push(OdometrySample { t: s.t, position: s.position, orientation: s.orientation, velocity: s.velocity })
    };

    for (k, imu) in streams.imu.iter().enumerate() {
        if k > 0 || imu.t > state.t + 1e-12 {
            let dt = imu.t - state.t;
            state = ekf_predict(&state, imu, dt, cfg)?;
            state.t = imu.t;
        }
        while est_i < streams.estimator.len() && due(streams.estimator[est_i].t, state.t) {
            match ekf_update_velocity(&state, &streams.estimator[est_i], cfg)? {
                UpdateOutcome::Accepted(s) => state = s,
                UpdateOutcome::Rejected { .. } => out.rejected_velocity += 1,
            }
            est_i += 1;
        }
        if use_vio {
            while vio_i < streams.vio.len() && due(streams.vio[vio_i].t, state.t) {
                match ekf_update_pose(&state, &streams.vio[vio_i], cfg)? {
                    UpdateOutcome::Accepted(s) => state = s,
                    UpdateOutcome::Rejected { .. } => out.rejected_pose += 1,
                }
                vio_i += 1;
            }
        }
        record(&state, &mut out);
    }
    Ok(out)
}
