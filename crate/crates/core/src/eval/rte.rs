use nalgebra::{UnitQuaternion, Vector2, Vector3};

use super::EvalError;
use crate::geometry::{rotate2, yaw_of};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RteResult {
    /// End-point translation error of each segment, metres.
    pub segment_errors: Vec<f64>,
    pub mean: f64,
}

fn interpolate(traj: &[TrajectorySample], t: f64) -> Option<TrajectorySample> {
    let first = traj.first()?;
    let last = traj.last()?;
    if t < first.t - 1e-9 || t > last.t + 1e-9 {
        return None;
    }
    let k = traj.partition_point(|s| s.t < t);
    if k == 0 {
        return Some(*first);
    }
    if k == traj.len() {
        return Some(*last);
    }
    let (a, b) = (&traj[k - 1], &traj[k]);
    if b.t - a.t <= 0.0 {
        return Some(*b);
    }
    let s = (t - a.t) / (b.t - a.t);
    Some(TrajectorySample {
        t,
        position: a.position.lerp(&b.position, s),
        orientation: a.orientation.slerp(&b.orientation, s),
    })
}

/// Relative trajectory error over consecutive ground-truth segments of
/// `segment_length` metres of arc.
///
/// Each segment's estimated displacement is rotated by the heading
/// difference at the segment start (position + yaw alignment) and compared
/// with the true displacement. The estimate is interpolated at the
/// ground-truth timestamps.
pub fn rte(est: &[TrajectorySample], gt: &[TrajectorySample], segment_length: f64) -> Result<RteResult, EvalError> {
    if gt.windows(2).any(|w| w[1].t <= w[0].t) || est.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(EvalError::NonMonotonicTime);
    }
    let mut arc = Vec::with_capacity(gt.len());
    let mut acc = 0.0;
    for (k, s) in gt.iter().enumerate() {
        if k > 0 {
            acc += (s.position - gt[k - 1].position).norm();
        }
        arc.push(acc);
    }
    let mut errors = Vec::new();
    let mut start = 0;
    while start < gt.len() {
        let target = arc[start] + segment_length;
        let Some(end) = (start + 1..gt.len()).find(|&k| arc[k] >= target - 1e-12) else { break };
        let (ga, gb) = (&gt[start], &gt[end]);
        let (Some(ea), Some(eb)) = (interpolate(est, ga.t), interpolate(est, gb.t)) else {
            return Err(EvalError::NoOverlap);
        };
        let dyaw = yaw_of(&ga.orientation) - yaw_of(&ea.orientation);
        let d_est = eb.position - ea.position;
        let xy = rotate2(dyaw, Vector2::new(d_est.x, d_est.y));
        let aligned = Vector3::new(xy.x, xy.y, d_est.z);
        errors.push((aligned - (gb.position - ga.position)).norm());
        start = end;
    }
    if errors.is_empty() {
        return Err(EvalError::InsufficientLength { available: acc, required: segment_length });
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(RteResult { segment_errors: errors, mean })
}
