use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::PointCloud;

/// Replaces the points of every occupied voxel of the world-aligned grid by
/// their centroid. Output order follows first occupancy in the input.
pub fn voxel_downsample(cloud: &PointCloud, resolution: f64) -> PointCloud {
    assert!(resolution > 0.0, "voxel resolution must be positive");
    let mut slots: HashMap<[i64; 3], usize> = HashMap::with_capacity(cloud.len());
    let mut acc: Vec<(Vector3<f64>, usize)> = Vec::new();
    for p in &cloud.points {
        let key = voxel_key(p, resolution);
        let slot = *slots.entry(key).or_insert_with(|| {
            acc.push((Vector3::zeros(), 0));
            acc.len() - 1
        });
        acc[slot].0 += p.coords;
        acc[slot].1 += 1;
    }
    let points = acc
        .into_iter()
        .map(|(sum, n)| {
            if n == 1 {
                Point3::from(sum)
            } else {
                Point3::from(sum / n as f64)
            }
        })
        .collect();
    cloud.with_points(points)
}

pub(crate) fn voxel_key(p: &Point3<f64>, resolution: f64) -> [i64; 3] {
    [
        (p.x / resolution).floor() as i64,
        (p.y / resolution).floor() as i64,
        (p.z / resolution).floor() as i64,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloudfilter::Frame;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn hundred_points_in_one_voxel_collapse_to_centroid() {
        let pts: Vec<_> = (0..100)
            .map(|i| Point3::new(0.001 + 0.0002 * i as f64, 0.01, 0.02 - 0.0001 * i as f64))
            .collect();
        let cloud = PointCloud::new(0.0, Frame::World, pts);
        let out = voxel_downsample(&cloud, 0.025);
        assert_eq!(out.len(), 1);
        let c = cloud.centroid().unwrap();
        assert!((out.points[0] - c).norm() < 1e-15);
    }

    #[test]
    fn adjacent_voxels_stay_separate() {
        let cloud = PointCloud::new(
            0.0,
            Frame::World,
            vec![Point3::new(0.024, 0.0, 0.0), Point3::new(0.026, 0.0, 0.0)],
        );
        assert_eq!(voxel_downsample(&cloud, 0.025).len(), 2);
    }

    proptest! {
        #[test]
        fn count_matches_voxel_hash_and_centroids_stay_inside(
            raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -0.3f64..0.3), 0..400)
        ) {
            let pts: Vec<_> = raw.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let cloud = PointCloud::new(0.0, Frame::World, pts.clone());
            let res = 0.05;
            let out = voxel_downsample(&cloud, res);
            let oracle: HashSet<[i64; 3]> = pts
                .iter()
                .map(|p| [(p.x / res).floor() as i64, (p.y / res).floor() as i64, (p.z / res).floor() as i64])
                .collect();
            prop_assert_eq!(out.len(), oracle.len());
            for p in &out.points {
                prop_assert!(oracle.contains(&voxel_key(p, res)));
            }
            // idempotent
            prop_assert_eq!(voxel_downsample(&out, res), out);
        }
    }
}
