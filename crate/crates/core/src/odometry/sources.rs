use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{SeedTree, Stream};
use crate::sensorsim::RobotState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorErrors {
    /// Per-axis white noise on body-frame velocity.
    pub sigma: [f64; 3],
    /// Constant body-frame velocity bias.
    pub bias: [f64; 3],
}

impl Default for EstimatorErrors {
    fn default() -> Self {
        Self { sigma: [0.03, 0.03, 0.02], bias: [0.03, -0.02, 0.003] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuErrors {
    /// Per-axis rotation-vector noise on orientation.
    pub orientation_sigma: f64,
    pub angular_velocity_sigma: f64,
}

impl Default for ImuErrors {
    fn default() -> Self {
        Self { orientation_sigma: 0.002, angular_velocity_sigma: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VioErrors {
    /// Position random walk in m/sqrt(s) per axis.
    pub random_walk: f64,
    pub noise: f64,
    /// Closed intervals [start, end] in seconds without samples.
    pub dropouts: Vec<[f64; 2]>,
}

impl Default for VioErrors {
    fn default() -> Self {
        Self { random_walk: 0.015, noise: 0.005, dropouts: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceErrorModel {
    pub estimator: EstimatorErrors,
    pub imu: ImuErrors,
    pub vio: VioErrors,
}

impl SourceErrorModel {
    pub fn noiseless() -> Self {
        Self {
            estimator: EstimatorErrors { sigma: [0.0; 3], bias: [0.0; 3] },
            imu: ImuErrors { orientation_sigma: 0.0, angular_velocity_sigma: 0.0 },
            vio: VioErrors { random_walk: 0.0, noise: 0.0, dropouts: Vec::new() },
        }
    }

    pub fn is_valid(&self) -> bool {
        let e = &self.estimator;
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        e.sigma.iter().all(|&s| nonneg(s))
            && e.bias.iter().all(|b| b.is_finite())
            && nonneg(self.imu.orientation_sigma)
            && nonneg(self.imu.angular_velocity_sigma)
            && nonneg(self.vio.random_walk)
            && nonneg(self.vio.noise)
            && self.vio.dropouts.iter().all(|d| d[0] <= d[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceRates {
    pub estimator: f64,
    pub imu: f64,
    pub vio: f64,
}

impl Default for SourceRates {
    fn default() -> Self {
        Self { estimator: 50.0, imu: 200.0, vio: 90.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSample {
    pub t: f64,
    /// Body-frame linear velocity.
    pub velocity: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub orientation: UnitQuaternion<f64>,
    pub angular_velocity: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VioSample {
    pub t: f64,
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceStreams {
    pub estimator: Vec<EstimatorSample>,
    pub imu: Vec<ImuSample>,
    pub vio: Vec<VioSample>,
}

/// Indices of the first ground-truth state at or after each tick of a
/// clock running at `rate` from the first state's time.
pub(crate) fn resample_indices(gt: &[RobotState], rate: f64) -> Vec<usize> {
    let Some(first) = gt.first() else { return Vec::new() };
    let t0 = first.t;
    let t_end = gt[gt.len() - 1].t;
    let mut out = Vec::new();
    let mut cursor = 0;
    for k in 0.. {
        let t = t0 + k as f64 / rate;
        if t > t_end + 1e-9 {
            break;
        }
        while cursor < gt.len() && gt[cursor].t < t - 1e-9 {
            cursor += 1;
        }
        if cursor == gt.len() {
            break;
        }
        if out.last() != Some(&cursor) {
            out.push(cursor);
        }
    }
    out
}

fn gaussian3<R: Rng>(rng: &mut R, sigma: [f64; 3]) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    for i in 0..3 {
        let n: f64 = rng.sample(StandardNormal);
        v[i] = n * sigma[i];
    }
    v
}

/// Degrades ground truth into the three odometry inputs. Each source draws
/// from its own random stream.
pub fn make_source_streams(
    gt: &[RobotState],
    model: &SourceErrorModel,
    rates: &SourceRates,
    seeds: &SeedTree,
) -> SourceStreams {
    let mut est_rng = seeds.stream(Stream::Estimator);
    let mut imu_rng = seeds.stream(Stream::Imu);
    let mut vio_rng = seeds.stream(Stream::Vio);
    let bias = Vector3::from(model.estimator.bias);

    let estimator = resample_indices(gt, rates.estimator)
        .into_iter()
        .map(|i| EstimatorSample {
            t: gt[i].t,
            velocity: gt[i].linear_velocity + bias + gaussian3(&mut est_rng, model.estimator.sigma),
        })
        .collect();

    let so = model.imu.orientation_sigma;
    let sw = model.imu.angular_velocity_sigma;
    let imu = resample_indices(gt, rates.imu)
        .into_iter()
        .map(|i| {
            let rot = gaussian3(&mut imu_rng, [so; 3]);
            ImuSample {
                t: gt[i].t,
                orientation: gt[i].orientation * UnitQuaternion::from_scaled_axis(rot),
                angular_velocity: gt[i].angular_velocity + gaussian3(&mut imu_rng, [sw; 3]),
            }
        })
        .collect();

    let vio_cfg = &model.vio;
    let mut walk = Vector3::zeros();
    let mut prev_t: Option<f64> = None;
    let mut vio = Vec::new();
    for i in resample_indices(gt, rates.vio) {
        let t = gt[i].t;
        // the walk keeps drifting through dropouts
        if let Some(p) = prev_t {
            let s = vio_cfg.random_walk * (t - p).sqrt();
            walk += gaussian3(&mut vio_rng, [s; 3]);
        }
        prev_t = Some(t);
        let noise = gaussian3(&mut vio_rng, [vio_cfg.noise; 3]);
        if vio_cfg.dropouts.iter().any(|d| t >= d[0] && t <= d[1]) {
            continue;
        }
        vio.push(VioSample { t, position: gt[i].position + walk + noise });
    }

    SourceStreams { estimator, imu, vio }
}
