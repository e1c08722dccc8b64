use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sources::{EstimatorSample, ImuSample, VioSample};

pub type Cov9 = SMatrix<f64, 9, 9>;
type Mat3x9 = SMatrix<f64, 3, 9>;

#[derive(Debug, Error, PartialEq)]
pub enum EkfError {
    #[error("prediction step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("covariance lost symmetry or positive semi-definiteness after {0}")]
    NotPsd(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EkfConfig {
    /// Measurement noise std of the estimator velocity, per body axis.
    pub velocity_sigma: [f64; 3],
    /// Measurement noise std of VIO position.
    pub position_sigma: f64,
    /// Process noise densities, (m)^2/s and (m/s)^2/s.
    pub position_process: f64,
    pub velocity_process: f64,
    /// Attitude error variance, reset from the IMU each prediction.
    pub attitude_variance: f64,
    /// Squared Mahalanobis distance above which a sample is rejected.
    pub gate: f64,
    pub initial_position_sigma: f64,
    pub initial_velocity_sigma: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            velocity_sigma: [0.03, 0.03, 0.02],
            position_sigma: 0.005,
            position_process: 1e-6,
            velocity_process: 0.5,
            attitude_variance: 4e-6,
            gate: 9.0,
            initial_position_sigma: 1e-3,
            initial_velocity_sigma: 0.05,
        }
    }
}

/// Fused estimate. Error-state covariance order: position, velocity, attitude.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub t: f64,
    pub position: Vector3<f64>,
    /// World-frame velocity.
    pub velocity: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub covariance: Cov9,
}

impl EkfState {
    pub fn new(
        t: f64,
        position: Vector3<f64>,
        velocity: Vector3<f64>,
        orientation: UnitQuaternion<f64>,
        cfg: &EkfConfig,
    ) -> Self {
        let mut diag = SVector::<f64, 9>::zeros();
        for i in 0..3 {
            diag[i] = cfg.initial_position_sigma.powi(2);
            diag[3 + i] = cfg.initial_velocity_sigma.powi(2);
            diag[6 + i] = cfg.attitude_variance;
        }
        Self { t, position, velocity, orientation, covariance: Cov9::from_diagonal(&diag) }
    }

    pub fn pose(&self) -> crate::geometry::Pose {
        crate::geometry::Pose::from_parts(self.position.into(), self.orientation)
    }
}

/// Result of a gated measurement update.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateOutcome {
    Accepted(EkfState),
    Rejected { mahalanobis2: f64 },
}

fn check_psd(p: &Cov9, stage: &'static str) -> Result<(), EkfError> {
    if !p.iter().all(|v| v.is_finite()) {
        return Err(EkfError::NotPsd(stage));
    }
    let scale = p.amax().max(1.0);
    if (p - p.transpose()).amax() > 1e-9 * scale {
        return Err(EkfError::NotPsd(stage));
    }
    let eig = p.symmetric_eigenvalues();
    if eig.min() < -1e-9 * scale {
        return Err(EkfError::NotPsd(stage));
    }
    Ok(())
}

/// Constant-velocity prediction with the IMU orientation taken as given.
/// The world velocity is carried along with the change in heading so a
/// constant body-frame velocity survives turns between estimator samples.
pub fn ekf_predict(state: &EkfState, imu: &ImuSample, dt: f64, cfg: &EkfConfig) -> Result<EkfState, EkfError> {
    if !(dt > 0.0) {
        return Err(EkfError::NonPositiveStep(dt));
    }
    let delta = (imu.orientation * state.orientation.inverse()).to_rotation_matrix();
    let mut f = Cov9::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * dt));
    f.fixed_view_mut::<3, 3>(3, 3).copy_from(delta.matrix());

    let mut p = f * state.covariance * f.transpose();
    for i in 0..3 {
        p[(i, i)] += cfg.position_process * dt;
        p[(3 + i, 3 + i)] += cfg.velocity_process * dt;
    }
    // attitude comes straight from the IMU
    for i in 0..9 {
        for j in 6..9 {
            p[(i, j)] = 0.0;
            p[(j, i)] = 0.0;
        }
    }
    for i in 6..9 {
        p[(i, i)] = cfg.attitude_variance;
    }
    let p = 0.5 * (p + p.transpose());
    check_psd(&p, "predict")?;

    Ok(EkfState {
        t: state.t + dt,
        position: state.position + state.velocity * dt,
        velocity: delta * state.velocity,
        orientation: imu.orientation,
        covariance: p,
    })
}

fn linear_update(
    state: &EkfState,
    h: &Mat3x9,
    innovation: Vector3<f64>,
    r: &Matrix3<f64>,
    gate: f64,
    stage: &'static str,
) -> Result<UpdateOutcome, EkfError> {
    let p = &state.covariance;
    let s = h * p * h.transpose() + r;
    let Some(s_inv) = s.try_inverse() else {
        return Err(EkfError::NotPsd(stage));
    };
    let d2 = (innovation.transpose() * s_inv * innovation)[0];
    if !(d2 <= gate) {
        return Ok(UpdateOutcome::Rejected { mahalanobis2: d2 });
    }
    let k = p * h.transpose() * s_inv;
    let dx = k * innovation;
    // Joseph form keeps the covariance symmetric and PSD
    let i_kh = Cov9::identity() - k * h;
    let p_new = i_kh * p * i_kh.transpose() + k * r * k.transpose();
    let p_new = 0.5 * (p_new + p_new.transpose());
    check_psd(&p_new, stage)?;
    Ok(UpdateOutcome::Accepted(EkfState {
        t: state.t,
        position: state.position + dx.fixed_rows::<3>(0),
        velocity: state.velocity + dx.fixed_rows::<3>(3),
        orientation: state.orientation,
        covariance: p_new,
    }))
}

/// Fuses a body-frame velocity sample, rotated into the world with the
/// current orientation.
pub fn ekf_update_velocity(
    state: &EkfState,
    sample: &EstimatorSample,
    cfg: &EkfConfig,
) -> Result<UpdateOutcome, EkfError> {
    let rot = state.orientation.to_rotation_matrix();
    let z = rot * sample.velocity;
    let r_body = Matrix3::from_diagonal(&Vector3::from(cfg.velocity_sigma).map(|s| s * s));
    let r = rot.matrix() * r_body * rot.matrix().transpose();
    let mut h = Mat3x9::zeros();
    h.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    linear_update(state, &h, z - state.velocity, &r, cfg.gate, "velocity update")
}

/// Fuses a VIO position sample.
pub fn ekf_update_pose(state: &EkfState, sample: &VioSample, cfg: &EkfConfig) -> Result<UpdateOutcome, EkfError> {
    let r = Matrix3::identity() * cfg.position_sigma.powi(2);
    let mut h = Mat3x9::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    linear_update(state, &h, sample.position - state.position, &r, cfg.gate, "pose update")
}
