//! Policy observation: height samples around the base, proprioception and
//! a fixed-length history.

use std::collections::VecDeque;
use std::io::{self, Write};

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::elevmap::ElevationMap;
use crate::geometry::{rotate2, yaw_of, Pose};

/// Samples along the body x axis.
pub const GRID_X: usize = 11;
/// Samples along the body y axis.
pub const GRID_Y: usize = 7;
pub const NUM_HEIGHTS: usize = GRID_X * GRID_Y;
/// command + joint positions + joint velocities + gravity + heights
pub const FRAME_LEN: usize = 3 + 12 + 12 + 3 + NUM_HEIGHTS;
pub const HISTORY_LEN: usize = 10;
pub const OBS_LEN: usize = HISTORY_LEN * FRAME_LEN;
pub const TARGET_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeightScanConfig {
    pub spacing: f64,
    /// Value used for cells the map has not seen, relative to the base.
    pub default_height: f64,
}

impl Default for HeightScanConfig {
    fn default() -> Self {
        Self { spacing: 0.05, default_height: -0.30 }
    }
}

/// World xy of the 77 sample points, x-major: index = i * GRID_Y + j with
/// body offset ((i - 5) * spacing, (j - 3) * spacing).
pub fn sample_positions(base: &Pose, spacing: f64) -> Vec<Vector2<f64>> {
    let yaw = yaw_of(&base.rotation);
    let c = Vector2::new(base.translation.x, base.translation.y);
    let mut out = Vec::with_capacity(NUM_HEIGHTS);
    for i in 0..GRID_X {
        for j in 0..GRID_Y {
            let local = Vector2::new(
                (i as f64 - (GRID_X / 2) as f64) * spacing,
                (j as f64 - (GRID_Y / 2) as f64) * spacing,
            );
            out.push(c + rotate2(yaw, local));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightSamples {
    pub positions: Vec<Vector2<f64>>,
    /// Map height minus base z, or the default for missing cells.
    pub values: Vec<f64>,
    pub filled: usize,
}

fn lookup(map: &ElevationMap, p: &Vector2<f64>, base_z: f64) -> Option<f64> {
    map.query_height(p.x, p.y).map(|c| c.height - base_z)
}

pub fn sample_heights(map: &ElevationMap, base: &Pose, cfg: &HeightScanConfig) -> HeightSamples {
    let positions = sample_positions(base, cfg.spacing);
    let base_z = base.translation.z;
    let mut filled = 0;
    let values = positions
        .iter()
        .map(|p| {
            lookup(map, p, base_z).unwrap_or_else(|| {
                filled += 1;
                cfg.default_height
            })
        })
        .collect();
    HeightSamples { positions, values, filled }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeightNoiseConfig {
    pub sample_sigma: f64,
    pub bias_sigma: [f64; 3],
    pub period: f64,
}

impl Default for HeightNoiseConfig {
    fn default() -> Self {
        Self { sample_sigma: 0.005, bias_sigma: [0.02, 0.02, 0.02], period: 7.0 }
    }
}

/// Slowly varying xyz bias plus white noise on the height samples.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightNoiseState {
    pub cfg: HeightNoiseConfig,
    pub bias: Vector3<f64>,
    /// `None` until the first draw.
    pub last_resample: Option<f64>,
}

impl HeightNoiseState {
    pub fn new(cfg: HeightNoiseConfig) -> Self {
        assert!(cfg.period > 0.0, "bias resample period must be positive");
        Self { cfg, bias: Vector3::zeros(), last_resample: None }
    }

    /// Perturbs one scan. The xy bias moves the sampling positions and the
    /// map is queried again; the z bias and white noise are added on top.
    pub fn apply<R: Rng>(
        &mut self,
        samples: &HeightSamples,
        map: &ElevationMap,
        base_z: f64,
        default_height: f64,
        t: f64,
        rng: &mut R,
    ) -> Vec<f64> {
        let due = self.last_resample.is_none_or(|last| t - last >= self.cfg.period - 1e-9);
        if due {
            for k in 0..3 {
                let n: f64 = rng.sample(StandardNormal);
                self.bias[k] = n * self.cfg.bias_sigma[k];
            }
            self.last_resample = Some(t);
        }
        let shift = Vector2::new(self.bias.x, self.bias.y);
        samples
            .positions
            .iter()
            .zip(&samples.values)
            .map(|(p, &v)| {
                let n: f64 = rng.sample(StandardNormal);
                let base = if shift == Vector2::zeros() {
                    v
                } else {
                    lookup(map, &(p + shift), base_z).unwrap_or(default_height)
                };
                base + self.bias.z + n * self.cfg.sample_sigma
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFrame {
    pub command: [f64; 3],
    pub joint_positions: [f64; 12],
    pub joint_velocities: [f64; 12],
    pub projected_gravity: Vector3<f64>,
    pub heights: Vec<f64>,
}

impl ObservationFrame {
    pub fn to_vec(&self) -> Vec<f64> {
        assert_eq!(self.heights.len(), NUM_HEIGHTS, "observation needs exactly {NUM_HEIGHTS} height samples");
        let mut v = Vec::with_capacity(FRAME_LEN);
        v.extend_from_slice(&self.command);
        v.extend_from_slice(&self.joint_positions);
        v.extend_from_slice(&self.joint_velocities);
        v.extend(self.projected_gravity.iter());
        v.extend_from_slice(&self.heights);
        v
    }
}

/// The last `HISTORY_LEN` frames, flattened oldest first.
#[derive(Debug, Clone, Default)]
pub struct HistoryBuffer {
    frames: VecDeque<Vec<f64>>,
}

impl HistoryBuffer {
    pub fn new() -> Self {
        Self { frames: VecDeque::with_capacity(HISTORY_LEN) }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Pushes a frame and returns the flat observation. Until the buffer is
    /// full the earliest frame stands in for the missing slots.
    pub fn push_and_flatten(&mut self, frame: &ObservationFrame) -> Vec<f64> {
        if self.frames.len() == HISTORY_LEN {
            self.frames.pop_front();
        }
        self.frames.push_back(frame.to_vec());
        let mut out = Vec::with_capacity(OBS_LEN);
        for _ in self.frames.len()..HISTORY_LEN {
            out.extend_from_slice(&self.frames[0]);
        }
        for f in &self.frames {
            out.extend_from_slice(f);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationTargets {
    pub linear_velocity: Vector3<f64>,
    pub friction: f64,
    pub contacts: [bool; 4],
}

impl EstimationTargets {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.linear_velocity.iter().copied().collect();
        v.push(self.friction);
        v.extend(self.contacts.iter().map(|&c| if c { 1.0 } else { 0.0 }));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInputs {
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
    pub estimator_target: Vec<f64>,
}

/// Actor sees estimates, critic sees ground truth; the estimator is trained
/// towards the ground truth.
pub fn assemble_inputs(obs: &[f64], est: &EstimationTargets, privileged: &EstimationTargets) -> PolicyInputs {
    assert_eq!(obs.len(), OBS_LEN, "flat observation must hold {OBS_LEN} values");
    let est = est.to_vec();
    let privileged = privileged.to_vec();
    let join = |tail: &[f64]| obs.iter().chain(tail).copied().collect::<Vec<_>>();
    PolicyInputs { actor: join(&est), critic: join(&privileged), estimator_target: privileged }
}

/// One CSV row: time followed by the values.
pub fn write_row<W: Write>(mut w: W, t: f64, values: &[f64]) -> io::Result<()> {
    write!(w, "{t}")?;
    for v in values {
        write!(w, ",{v}")?;
    }
    writeln!(w)
}
