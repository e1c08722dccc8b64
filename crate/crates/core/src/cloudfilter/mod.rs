//! Point clouds and the preprocessing chain applied before mapping:
//! statistical outlier removal, robot body masking and voxel downsampling.

mod body;
mod outlier;
mod voxel;

use std::io::{self, Write};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

pub use body::{body_filter, BodyModel, LinkCapsule, LinkKind, PosedBody};
pub use outlier::{remove_outliers, OutlierResult};
pub use voxel::voxel_downsample;

/// Depth sensors carried by the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorId {
    Front,
    Rear,
}

impl SensorId {
    pub fn as_str(self) -> &'static str {
        match self {
            SensorId::Front => "front",
            SensorId::Rear => "rear",
        }
    }
}

/// Coordinate frame a cloud is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Sensor(SensorId),
    World,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub t: f64,
    pub frame: Frame,
    /// Sensor that produced the points, kept after re-expression in the world frame.
    pub source: Option<SensorId>,
    pub points: Vec<Point3<f64>>,
}

impl PointCloud {
    pub fn new(t: f64, frame: Frame, points: Vec<Point3<f64>>) -> Self {
        let source = match frame {
            Frame::Sensor(id) => Some(id),
            Frame::World => None,
        };
        Self { t, frame, source, points }
    }

    pub fn empty(t: f64, frame: Frame) -> Self {
        Self::new(t, frame, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same provenance, different points.
    pub fn with_points(&self, points: Vec<Point3<f64>>) -> Self {
        Self { t: self.t, frame: self.frame, source: self.source, points }
    }

    /// Applies `sensor_to_world` and retags the cloud as world frame.
    pub fn transformed(&self, sensor_to_world: &Pose) -> Self {
        let points = self.points.iter().map(|p| sensor_to_world * p).collect();
        Self { t: self.t, frame: Frame::World, source: self.source, points }
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.coords.iter().all(|c| c.is_finite()))
    }

    /// ASCII XYZ, one `x y z` triple per line.
    pub fn write_xyz<W: Write>(&self, mut w: W) -> io::Result<()> {
        for p in &self.points {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        Ok(())
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.points.iter().map(|p| p.coords).sum();
        Some(Point3::from(sum / self.points.len() as f64))
    }
}

/// Stages of the preprocessing chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStage {
    Outlier,
    Body,
    Voxel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub order: Vec<FilterStage>,
    pub outlier_neighbors: usize,
    pub outlier_std_ratio: f64,
    pub body_margin: f64,
    pub voxel_resolution: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            order: vec![FilterStage::Outlier, FilterStage::Body, FilterStage::Voxel],
            outlier_neighbors: 8,
            outlier_std_ratio: 2.0,
            body_margin: 0.02,
            voxel_resolution: 0.025,
        }
    }
}

/// Counts of points removed per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterStats {
    pub input: usize,
    pub outliers: usize,
    pub body: usize,
    pub output: usize,
}

/// Runs the configured chain over a world-frame cloud.
pub fn preprocess(
    cloud: &PointCloud,
    body: &PosedBody,
    cfg: &FilterConfig,
) -> (PointCloud, FilterStats) {
    let mut stats = FilterStats { input: cloud.len(), ..Default::default() };
    let mut current = cloud.clone();
    for stage in &cfg.order {
        match stage {
            FilterStage::Outlier => {
                let res = remove_outliers(&current, cfg.outlier_neighbors, cfg.outlier_std_ratio);
                stats.outliers += res.removed;
                current = res.cloud;
            }
            FilterStage::Body => {
                let before = current.len();
                current = body_filter(&current, body, cfg.body_margin);
                stats.body += before - current.len();
            }
            FilterStage::Voxel => current = voxel_downsample(&current, cfg.voxel_resolution),
        }
    }
    stats.output = current.len();
    (current, stats)
}
