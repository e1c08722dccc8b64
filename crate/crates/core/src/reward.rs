//! Locomotion reward terms.
//!
//! Every term is computed as a magnitude; penalties get their sign from a
//! negative weight.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::sensorsim::RobotState;

pub const NUM_TERMS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    LinVelTracking,
    AngVelTracking,
    FeetAirTime,
    LinVelZ,
    AngVelXy,
    JointPosition,
    JointAcceleration,
    JointTorque,
    ActionRate,
    Collisions,
    TrunkHeight,
    TorqueLimits,
}

impl Term {
    pub const ALL: [Term; NUM_TERMS] = [
        Term::LinVelTracking,
        Term::AngVelTracking,
        Term::FeetAirTime,
        Term::LinVelZ,
        Term::AngVelXy,
        Term::JointPosition,
        Term::JointAcceleration,
        Term::JointTorque,
        Term::ActionRate,
        Term::Collisions,
        Term::TrunkHeight,
        Term::TorqueLimits,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::LinVelTracking => "lin_vel_tracking",
            Term::AngVelTracking => "ang_vel_tracking",
            Term::FeetAirTime => "feet_air_time",
            Term::LinVelZ => "lin_vel_z",
            Term::AngVelXy => "ang_vel_xy",
            Term::JointPosition => "joint_position",
            Term::JointAcceleration => "joint_acceleration",
            Term::JointTorque => "joint_torque",
            Term::ActionRate => "action_rate",
            Term::Collisions => "collisions",
            Term::TrunkHeight => "trunk_height",
            Term::TorqueLimits => "torque_limits",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub lin_vel_tracking: f64,
    pub ang_vel_tracking: f64,
    pub feet_air_time: f64,
    pub lin_vel_z: f64,
    pub ang_vel_xy: f64,
    pub joint_position: f64,
    pub joint_acceleration: f64,
    pub joint_torque: f64,
    pub action_rate: f64,
    pub collisions: f64,
    pub trunk_height: f64,
    pub torque_limits: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            lin_vel_tracking: 1.0,
            ang_vel_tracking: 0.5,
            feet_air_time: 3.0,
            lin_vel_z: -2.0,
            ang_vel_xy: -0.05,
            joint_position: -0.1,
            joint_acceleration: -2.5e-7,
            joint_torque: -0.0002,
            action_rate: -0.01,
            collisions: -1.0,
            trunk_height: -5.0,
            torque_limits: -10.0,
        }
    }
}

impl RewardWeights {
    pub fn get(&self, term: Term) -> f64 {
        match term {
            Term::LinVelTracking => self.lin_vel_tracking,
            Term::AngVelTracking => self.ang_vel_tracking,
            Term::FeetAirTime => self.feet_air_time,
            Term::LinVelZ => self.lin_vel_z,
            Term::AngVelXy => self.ang_vel_xy,
            Term::JointPosition => self.joint_position,
            Term::JointAcceleration => self.joint_acceleration,
            Term::JointTorque => self.joint_torque,
            Term::ActionRate => self.action_rate,
            Term::Collisions => self.collisions,
            Term::TrunkHeight => self.trunk_height,
            Term::TorqueLimits => self.torque_limits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub tracking_sigma: f64,
    pub air_time_target: f64,
    pub negative_scale: f64,
    pub q_default: [f64; 12],
    pub h_default: f64,
    /// Go1 actuator limits (hip, thigh, calf) repeated per leg.
    pub torque_limits: [f64; 12],
}

impl Default for RewardConfig {
    fn default() -> Self {
        let leg = [23.7, 23.7, 35.55];
        let mut torque_limits = [0.0; 12];
        let mut q_default = [0.0; 12];
        for l in 0..4 {
            torque_limits[3 * l..3 * l + 3].copy_from_slice(&leg);
            q_default[3 * l..3 * l + 3].copy_from_slice(&[0.0, 0.85, -1.7]);
        }
        Self {
            weights: RewardWeights::default(),
            tracking_sigma: 0.25,
            air_time_target: 0.25,
            negative_scale: 0.25,
            q_default,
            h_default: 0.30,
            torque_limits,
        }
    }
}

/// exp(-|x|^2 / sigma^2) with sigma = 0.25.
pub fn phi(x: &[f64]) -> f64 {
    phi_with(x, 0.25)
}

pub fn phi_with(x: &[f64], sigma: f64) -> f64 {
    let n2: f64 = x.iter().map(|v| v * v).sum();
    (-n2 / (sigma * sigma)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermValue {
    pub term: Term,
    pub raw: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub terms: [TermValue; NUM_TERMS],
    pub pre_scale_sum: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn get(&self, term: Term) -> &TermValue {
        &self.terms[Term::ALL.iter().position(|&t| t == term).expect("every term is present")]
    }
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Evaluates all terms for one control tick.
pub fn compute_terms(
    state: &RobotState,
    command: &[f64; 3],
    action: &[f64; 12],
    prev_action: &[f64; 12],
    torques: &[f64; 12],
    collisions: usize,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let v = &state.linear_velocity;
    let w = &state.angular_velocity;
    let air: f64 = (0..4)
        .filter(|&f| state.first_contact[f])
        .map(|f| state.last_air_times[f] - cfg.air_time_target)
        .sum();
    let dq: Vec<f64> = state.joint_positions.iter().zip(&cfg.q_default).map(|(q, d)| q - d).collect();
    let da: Vec<f64> = action.iter().zip(prev_action).map(|(a, b)| a - b).collect();
    let over: f64 = torques.iter().zip(&cfg.torque_limits).map(|(t, l)| (t.abs() - l).max(0.0)).sum();

    let raw = |term: Term| match term {
        Term::LinVelTracking => phi_with(&[command[0] - v.x, command[1] - v.y], cfg.tracking_sigma),
        Term::AngVelTracking => phi_with(&[command[2] - w.z], cfg.tracking_sigma),
        Term::FeetAirTime => air,
        Term::LinVelZ => v.z * v.z,
        Term::AngVelXy => w.x * w.x + w.y * w.y,
        Term::JointPosition => sq(&dq),
        Term::JointAcceleration => sq(&state.joint_accelerations),
        Term::JointTorque => sq(torques),
        Term::ActionRate => sq(&da),
        Term::Collisions => collisions as f64,
        Term::TrunkHeight => (state.trunk_height - cfg.h_default).powi(2),
        Term::TorqueLimits => over,
    };
    let terms = Term::ALL.map(|term| {
        let r = raw(term);
        TermValue { term, raw: r, weighted: cfg.weights.get(term) * r }
    });
    let pre_scale_sum = terms.iter().map(|t| t.weighted).sum();
    RewardBreakdown { terms, pre_scale_sum, total: total(pre_scale_sum, cfg) }
}

/// Applies the negative-sum scaling once.
pub fn total(pre_scale_sum: f64, cfg: &RewardConfig) -> f64 {
    if pre_scale_sum < 0.0 {
        cfg.negative_scale * pre_scale_sum
    } else {
        pre_scale_sum
    }
}

/// PD torques towards joint targets.
pub fn pd_torques(target: &[f64; 12], q: &[f64; 12], qd: &[f64; 12], kp: f64, kd: f64) -> [f64; 12] {
    std::array::from_fn(|j| kp * (target[j] - q[j]) - kd * qd[j])
}

pub fn write_csv_header<W: Write>(mut w: W) -> io::Result<()> {
    let names: Vec<&str> = Term::ALL.iter().map(|t| t.name()).collect();
    writeln!(w, "t,{},pre_scale_sum,total", names.join(","))
}

/// One row of weighted contributions.
pub fn write_csv_row<W: Write>(mut w: W, t: f64, b: &RewardBreakdown) -> io::Result<()> {
    write!(w, "{t}")?;
    for term in &b.terms {
        write!(w, ",{}", term.weighted)?;
    }
    writeln!(w, ",{},{}", b.pre_scale_sum, b.total)
}
