use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};

use super::EvalError;
use crate::elevmap::ElevationMap;
use crate::geometry::{yaw_of, Pose};
use crate::kdtree::KdTree;
use crate::scene::{ground_truth_patch, Heightfield, PatchRegion};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChamferResult {
    /// Mean nearest-neighbour distance in centimetres.
    pub cm: f64,
    /// Set when the source set was empty (the value is then 0).
    pub empty_source: bool,
}

/// Mean over `source` of the Euclidean distance to the nearest point of
/// `target`, in centimetres. Not symmetric.
pub fn chamfer_one_way(source: &[Point3<f64>], target: &[Point3<f64>]) -> Result<ChamferResult, EvalError> {
    if target.is_empty() {
        return Err(EvalError::EmptyTarget);
    }
    if source.is_empty() {
        return Ok(ChamferResult { cm: 0.0, empty_source: true });
    }
    let tree = KdTree::build(target);
    let sum: f64 = source
        .iter()
        .map(|p| tree.nearest(p).expect("target is non-empty").1.sqrt())
        .sum();
    Ok(ChamferResult { cm: 100.0 * sum / source.len() as f64, empty_source: false })
}

/// Yaw-only frame at the base position.
fn heading_frame(pose: &Pose) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::from(pose.translation.vector),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_of(&pose.rotation)),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapWindow {
    /// `None` when the region held no valid cells.
    pub cm: Option<f64>,
    pub map_points: usize,
    pub clipped: usize,
}

/// Compares the map around the estimated base with the true terrain around
/// the true base.
///
/// Valid cells inside the yaw-aligned region centred on `estimated` are
/// expressed relative to that heading frame and placed at the same offset
/// from `truth`, so only the map's error relative to the robot's own belief
/// is measured. With perfect odometry both poses coincide.
pub fn map_vs_ground_truth(
    map: &ElevationMap,
    hf: &Heightfield,
    estimated: &Pose,
    truth: &Pose,
    region: &PatchRegion,
) -> Result<MapWindow, EvalError> {
    let est_frame = heading_frame(estimated);
    let yaw = yaw_of(&estimated.rotation);
    let center = estimated.translation.vector.xy();
    let to_truth = heading_frame(truth) * est_frame.inverse();
    let cells: Vec<Point3<f64>> = map
        .cells_in_rect(center, yaw, region.length, region.width)
        .into_iter()
        .map(|p| to_truth * p)
        .collect();
    let patch = ground_truth_patch(hf, truth, region);
    if cells.is_empty() {
        return Ok(MapWindow { cm: None, map_points: 0, clipped: patch.clipped });
    }
    let r = chamfer_one_way(&cells, &patch.cloud.points)?;
    Ok(MapWindow { cm: Some(r.cm), map_points: cells.len(), clipped: patch.clipped })
}
