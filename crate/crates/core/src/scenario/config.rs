use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::cloudfilter::{BodyModel, FilterConfig};
use crate::elevmap::{MapConfig, SensorVarianceModel};
use crate::obsbuilder::{HeightNoiseConfig, HeightScanConfig};
use crate::odometry::{EkfConfig, OdometryMode, SourceErrorModel, SourceRates};
use crate::reward::RewardConfig;
use crate::scene::{PatchRegion, Primitive, Rise, SceneSpec, WorldExtent};
use crate::sensorsim::{CameraModel, CommandProfile, CommandSegment, GaitParams, StartPose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// One run over the configured scene and command profile.
    Mapping,
    /// One run per step height over a single step.
    StepSweep,
    /// One short run per command combination on flat ground.
    TrackingSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSet {
    pub front: CameraModel,
    pub rear: CameraModel,
    pub use_rear: bool,
}

impl Default for CameraSet {
    fn default() -> Self {
        Self { front: CameraModel::front_stereo(), rear: CameraModel::rear_tof(), use_rear: true }
    }
}

impl CameraSet {
    pub fn enabled(&self) -> Vec<&CameraModel> {
        let mut v = vec![&self.front];
        if self.use_rear {
            v.push(&self.rear);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdometryConfig {
    pub mode: OdometryMode,
    /// Vertical drift added to whichever estimate is used, m/s.
    pub z_drift_rate: f64,
    pub errors: SourceErrorModel,
    pub rates: SourceRates,
    pub ekf: EkfConfig,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        Self {
            mode: OdometryMode::Gt,
            z_drift_rate: 0.0,
            errors: SourceErrorModel::default(),
            rates: SourceRates::default(),
            ekf: EkfConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub map: MapConfig,
    pub front_variance: SensorVarianceModel,
    pub rear_variance: SensorVarianceModel,
    pub drift_compensation: bool,
    pub filter: FilterConfig,
    #[serde(default)]
    pub region: PatchRegion,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            map: MapConfig::default(),
            front_variance: SensorVarianceModel { base_variance: 1e-5, range_coeff: 4e-5, time_rate: 1e-8 },
            rear_variance: SensorVarianceModel { base_variance: 1e-5, range_coeff: 1e-5, time_rate: 1e-8 },
            drift_compensation: true,
            filter: FilterConfig::default(),
            region: PatchRegion::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub height_scan: HeightScanConfig,
    /// Off by default so map metrics see the raw samples.
    pub height_noise_enabled: bool,
    pub height_noise: HeightNoiseConfig,
    pub reward: RewardConfig,
    pub kp: f64,
    pub kd: f64,
    pub friction: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            height_scan: HeightScanConfig::default(),
            height_noise_enabled: false,
            height_noise: HeightNoiseConfig::default(),
            reward: RewardConfig::default(),
            kp: 20.0,
            kd: 0.5,
            friction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub sim: f64,
    pub control: f64,
    pub cloud: f64,
    pub chamfer: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { sim: 200.0, control: 50.0, cloud: 30.0, chamfer: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSweepConfig {
    pub heights: Vec<f64>,
    pub x_start: f64,
    pub depth: f64,
    pub speed: f64,
    /// Distance walked past the far edge of the step.
    pub run_out: f64,
    pub success_chamfer_cm: f64,
}

impl Default for StepSweepConfig {
    fn default() -> Self {
        Self {
            heights: (0..9).map(|i| 0.075 + 0.025 * i as f64).collect(),
            x_start: 1.5,
            depth: 0.30,
            speed: 0.5,
            run_out: 0.6,
            success_chamfer_cm: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSweepConfig {
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub wz: Vec<f64>,
    pub segment_duration: f64,
    pub settle: f64,
}

impl Default for TrackingSweepConfig {
    fn default() -> Self {
        Self {
            vx: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            vy: vec![-0.5, 0.0, 0.5],
            wz: vec![-1.0, 0.0, 1.0],
            segment_duration: 2.0,
            settle: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub scene: SceneSpec,
    pub scene_resolution: f64,
    pub profile: CommandProfile,
    pub rates: Rates,
    pub cameras: CameraSet,
    /// When false, rendered clouds are used without noise or dropout.
    pub sensor_noise: bool,
    pub body: BodyModel,
    pub gait: GaitParams,
    pub odometry: OdometryConfig,
    pub mapping: MappingConfig,
    pub policy: PolicyConfig,
    pub step_sweep: StepSweepConfig,
    pub tracking_sweep: TrackingSweepConfig,
    /// Map and cloud export interval in seconds of simulated time.
    pub snapshot_every: Option<f64>,
    /// RTE segment arc length.
    pub rte_segment: f64,
}

/// Obstacle course: two 10 cm treads up to a 30 cm platform, then a ramp down.
pub fn obstacle_scene() -> SceneSpec {
    SceneSpec {
        extent: WorldExtent { x_min: -1.0, x_max: 6.0, y_min: -1.5, y_max: 1.5 },
        primitives: vec![Primitive::Platform {
            x_start: 1.0,
            rise_steps: vec![Rise { height: 0.10, depth: 0.30 }, Rise { height: 0.20, depth: 0.30 }],
            platform_height: 0.30,
            platform_length: 0.60,
            ramp_slope: 0.3,
        }],
    }
}

/// Across the obstacle and back again.
pub fn obstacle_profile() -> CommandProfile {
    let seg = |vx| CommandSegment { vx, vy: 0.0, wz: 0.0, duration: 10.0 };
    CommandProfile { start: StartPose::default(), segments: vec![seg(0.5), seg(-0.5)] }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "obstacle".into(),
            kind: ScenarioKind::Mapping,
            seed: 0,
            scene: obstacle_scene(),
            scene_resolution: 0.01,
            profile: obstacle_profile(),
            rates: Rates::default(),
            cameras: CameraSet::default(),
            sensor_noise: true,
            body: BodyModel::default(),
            gait: GaitParams::default(),
            odometry: OdometryConfig::default(),
            mapping: MappingConfig::default(),
            policy: PolicyConfig::default(),
            step_sweep: StepSweepConfig::default(),
            tracking_sweep: TrackingSweepConfig::default(),
            snapshot_every: None,
            rte_segment: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            ScenarioError::Config(msg) => ScenarioError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        self.scene.validate()?;
        if !(self.scene_resolution > 0.0 && self.scene_resolution.is_finite()) {
            return bad(format!("scene_resolution must be positive, got {}", self.scene_resolution));
        }
        self.profile.validate()?;
        let r = &self.rates;
        for (name, v) in [("sim", r.sim), ("control", r.control), ("cloud", r.cloud), ("chamfer", r.chamfer)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("rates.{name} must be positive"));
            }
        }
        for (name, v) in [("control", r.control), ("cloud", r.cloud), ("chamfer", r.chamfer)] {
            if v > r.sim {
                return bad(format!("rates.{name} exceeds the simulation rate"));
            }
        }
        for cam in self.cameras.enabled() {
            cam.validate()?;
        }
        if !self.odometry.errors.is_valid() {
            return bad("odometry error model has negative or non-finite entries".into());
        }
        if !self.odometry.z_drift_rate.is_finite() {
            return bad("odometry.z_drift_rate must be finite".into());
        }
        self.mapping.map.validate()?;
        self.mapping.front_variance.validate()?;
        self.mapping.rear_variance.validate()?;
        if let Some(s) = self.snapshot_every {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("snapshot_every must be positive, got {s}"));
            }
        }
        if !(self.rte_segment > 0.0) {
            return bad("rte_segment must be positive".into());
        }
        match self.kind {
            ScenarioKind::StepSweep => {
                let s = &self.step_sweep;
                if s.heights.is_empty() || s.heights.iter().any(|h| !(*h > 0.0)) {
                    return bad("step_sweep.heights must be a non-empty list of positive heights".into());
                }
                if !(s.speed > 0.0 && s.depth > 0.0 && s.run_out >= 0.0) {
                    return bad("step_sweep speed and depth must be positive".into());
                }
            }
            ScenarioKind::TrackingSweep => {
                let s = &self.tracking_sweep;
                if s.vx.is_empty() || s.vy.is_empty() || s.wz.is_empty() {
                    return bad("tracking_sweep needs at least one value per axis".into());
                }
                if !(s.segment_duration > 0.0 && s.settle >= 0.0) {
                    return bad("tracking_sweep.segment_duration must be positive".into());
                }
            }
            ScenarioKind::Mapping => {}
        }
        Ok(())
    }

    /// Short label of the configuration, e.g. `ekf-novio+no-rear`.
    pub fn tag(&self) -> String {
        let mut tag = self.odometry.mode.as_str().to_string();
        if !self.cameras.use_rear {
            tag.push_str("+no-rear");
        }
        if !self.mapping.drift_compensation {
            tag.push_str("+no-drift-comp");
        }
        tag
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(ScenarioConfig::from_toml("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ScenarioConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn parse_errors_carry_the_line() {
        let err = ScenarioConfig::from_toml("seed = 3\nkind = \"mapping\"\nsensor_noise = 4\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = ScenarioConfig::from_toml("\n\nbogus_key = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ScenarioConfig::from_toml("snapshot_every = -1.0").is_err());
        assert!(ScenarioConfig::from_toml("[rates]\ncontrol = 400.0").is_err());
        assert!(ScenarioConfig::from_toml("kind = \"step_sweep\"\n[step_sweep]\nheights = []").is_err());
    }

    #[test]
    fn tags() {
        let mut cfg = ScenarioConfig::default();
        assert_eq!(cfg.tag(), "gt");
        cfg.odometry.mode = OdometryMode::EkfNovio;
        cfg.cameras.use_rear = false;
        assert_eq!(cfg.tag(), "ekf-novio+no-rear");
    }

    #[test]
    fn default_step_heights() {
        let h = StepSweepConfig::default().heights;
        assert_eq!(h.len(), 9);
        assert!((h[0] - 0.075).abs() < 1e-12 && (h[8] - 0.275).abs() < 1e-12);
    }
}
