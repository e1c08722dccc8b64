use super::PointCloud;
use crate::kdtree::KdTree;

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierResult {
    pub cloud: PointCloud,
    pub removed: usize,
    /// Set when the cloud had fewer than `k + 1` points and was passed through.
    pub too_small: bool,
}

/// Statistical outlier removal.
///
/// For each point the mean distance to its `k` nearest neighbours is
/// computed; a point survives iff that mean is at most
/// `global_mean + std_ratio * global_std` over all points.
pub fn remove_outliers(cloud: &PointCloud, k: usize, std_ratio: f64) -> OutlierResult {
    assert!(k >= 1, "outlier removal needs at least one neighbour");
    let n = cloud.len();
    if n < k + 1 {
        return OutlierResult { cloud: cloud.clone(), removed: 0, too_small: true };
    }
    let tree = KdTree::build(&cloud.points);
    let mean_dist: Vec<f64> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            // k + 1 because the query point is its own nearest neighbour
            let nn = tree.knn(p, k + 1);
            let mut sum = 0.0;
            let mut used = 0;
            let mut skipped_self = false;
            for &(j, d2) in &nn {
                if !skipped_self && j == i {
                    skipped_self = true;
                    continue;
                }
                if used == k {
                    break;
                }
                sum += d2.sqrt();
                used += 1;
            }
            sum / used as f64
        })
        .collect();
    let mean = mean_dist.iter().sum::<f64>() / n as f64;
    let var = mean_dist.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
    let threshold = mean + std_ratio * var.sqrt();
    let kept: Vec<_> = cloud
        .points
        .iter()
        .zip(&mean_dist)
        .filter(|(_, &d)| d <= threshold)
        .map(|(p, _)| *p)
        .collect();
    let removed = n - kept.len();
    OutlierResult { cloud: cloud.with_points(kept), removed, too_small: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloudfilter::Frame;
    use nalgebra::Point3;
    use proptest::prelude::*;

    fn grid_cloud(nx: usize, ny: usize, pitch: f64) -> Vec<Point3<f64>> {
        let mut pts = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                pts.push(Point3::new(i as f64 * pitch, j as f64 * pitch, 0.0));
            }
        }
        pts
    }

    /// Exhaustive kNN mean distances, independent of the tree.
    fn brute_mean_knn(points: &[Point3<f64>], k: usize) -> Vec<f64> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<f64> = points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| (q - p).norm())
                    .collect();
                d.sort_by(f64::total_cmp);
                d[..k].iter().sum::<f64>() / k as f64
            })
            .collect()
    }

    #[test]
    fn displaced_grid_point_is_the_only_removal() {
        let mut pts = grid_cloud(20, 20, 0.025);
        let victim = 20 * 10 + 7;
        pts[victim].z += 1.0;
        // oracle: exhaustive kNN statistics
        let d = brute_mean_knn(&pts, 8);
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let std = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        let expected: Vec<usize> =
            (0..pts.len()).filter(|&i| d[i] > mean + 2.0 * std).collect();
        assert_eq!(expected, vec![victim]);

        let cloud = PointCloud::new(0.0, Frame::World, pts.clone());
        let res = remove_outliers(&cloud, 8, 2.0);
        assert_eq!(res.removed, 1);
        assert!(!res.cloud.points.contains(&pts[victim]));
    }

    #[test]
    fn empty_and_tiny_clouds_pass_through() {
        let empty = PointCloud::empty(0.0, Frame::World);
        let res = remove_outliers(&empty, 8, 2.0);
        assert!(res.cloud.is_empty());
        assert!(res.too_small);
        let tiny = PointCloud::new(0.0, Frame::World, grid_cloud(2, 2, 1.0));
        let res = remove_outliers(&tiny, 8, 2.0);
        assert_eq!(res.cloud, tiny);
        assert!(res.too_small);
    }

    #[test]
    fn identical_points_are_all_kept() {
        let cloud = PointCloud::new(0.0, Frame::World, vec![Point3::new(0.3, 0.1, 0.2); 50]);
        let res = remove_outliers(&cloud, 8, 2.0);
        assert_eq!(res.removed, 0);
        assert_eq!(res.cloud.len(), 50);
    }

    #[test]
    fn not_idempotent_on_its_own_output() {
        // The displaced point inflates the spread; once it is gone the grid
        // corners stand out against the tighter statistics.
        let mut pts = grid_cloud(20, 20, 0.025);
        pts[20 * 10 + 7].z += 1.0;
        let first = remove_outliers(&PointCloud::new(0.0, Frame::World, pts), 8, 2.0);
        assert_eq!(first.removed, 1);
        let second = remove_outliers(&first.cloud, 8, 2.0);
        assert!(second.removed > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn keeps_exactly_the_oracle_inliers_in_order(
            raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -0.2f64..0.2), 10..120),
            k in 1usize..9,
        ) {
            let pts: Vec<_> = raw.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let d = brute_mean_knn(&pts, k);
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let std = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
            let threshold = mean + 2.0 * std;
            // skip draws with a point sitting on the threshold
            prop_assume!(d.iter().all(|x| (x - threshold).abs() > 1e-9));
            let expected: Vec<_> = pts.iter().zip(&d).filter(|(_, &x)| x <= threshold).map(|(p, _)| *p).collect();
            let res = remove_outliers(&PointCloud::new(0.0, Frame::World, pts.clone()), k, 2.0);
            prop_assert_eq!(res.removed, pts.len() - expected.len());
            prop_assert_eq!(res.cloud.points, expected);
        }
    }
}
