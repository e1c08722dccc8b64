use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloudfilter::{Frame, PointCloud, PosedBody, SensorId};
use crate::geometry::{MountPose, Pose};
use crate::scene::Heightfield;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("{0} camera: field of view must lie in (0, pi)")]
    FieldOfView(&'static str),
    #[error("{0} camera: min range must be below max range")]
    Range(&'static str),
    #[error("{0} camera: rate must be positive")]
    Rate(&'static str),
    #[error("{0} camera: image must have at least one pixel")]
    Resolution(&'static str),
}

/// Depth noise: Gaussian along the ray with sigma(r) = sigma0 + k * r^2,
/// plus i.i.d. dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub sigma0: f64,
    pub range_coeff: f64,
    pub dropout: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { sigma0: 0.0, range_coeff: 0.0, dropout: 0.0 }
    }
}

impl NoiseModel {
    pub fn sigma(&self, range: f64) -> f64 {
        self.sigma0 + self.range_coeff * range * range
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma0 == 0.0 && self.range_coeff == 0.0 && self.dropout == 0.0
    }
}

/// Pinhole depth camera. The sensor frame has x along the optical axis,
/// y to the left of the image and z up; "range" is depth along x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub id: SensorId,
    pub mount: MountPose,
    pub horizontal_fov: f64,
    pub vertical_fov: f64,
    pub width: usize,
    pub height: usize,
    pub min_range: f64,
    pub max_range: f64,
    pub rate: f64,
    #[serde(default)]
    pub noise: NoiseModel,
}

impl CameraModel {
    /// Stereo depth camera at the nose, pitched 60 degrees down
    /// (87 x 58 degree field of view, decimated image).
    pub fn front_stereo() -> Self {
        Self {
            id: SensorId::Front,
            mount: MountPose { translation: [0.28, 0.0, 0.03], rpy: [0.0, 60f64.to_radians(), 0.0] },
            horizontal_fov: 87f64.to_radians(),
            vertical_fov: 58f64.to_radians(),
            width: 96,
            height: 54,
            min_range: 0.1,
            max_range: 3.0,
            rate: 30.0,
            noise: NoiseModel { sigma0: 0.002, range_coeff: 0.004, dropout: 0.02 },
        }
    }

    /// Time-of-flight camera under the tail, looking forward and down at
    /// the ground beneath the trunk (56 x 44 degree field of view).
    pub fn rear_tof() -> Self {
        Self {
            id: SensorId::Rear,
            mount: MountPose { translation: [-0.22, 0.0, -0.03], rpy: [0.0, 50f64.to_radians(), 0.0] },
            horizontal_fov: 56f64.to_radians(),
            vertical_fov: 44f64.to_radians(),
            width: 56,
            height: 43,
            min_range: 0.1,
            max_range: 4.0,
            rate: 30.0,
            noise: NoiseModel { sigma0: 0.003, range_coeff: 0.002, dropout: 0.01 },
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let name = self.id.as_str();
        let fov_ok = |f: f64| f > 0.0 && f < PI;
        if !fov_ok(self.horizontal_fov) || !fov_ok(self.vertical_fov) {
            return Err(CameraError::FieldOfView(name));
        }
        if !(self.min_range >= 0.0 && self.min_range < self.max_range) {
            return Err(CameraError::Range(name));
        }
        if !(self.rate > 0.0) {
            return Err(CameraError::Rate(name));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::Resolution(name));
        }
        Ok(())
    }

    /// Per-pixel ray directions scaled to unit depth, row-major from the top-left.
    pub fn unit_depth_rays(&self) -> Vec<Vector3<f64>> {
        let th = (0.5 * self.horizontal_fov).tan();
        let tv = (0.5 * self.vertical_fov).tan();
        let mut rays = Vec::with_capacity(self.width * self.height);
        for v in 0..self.height {
            let nz = (1.0 - 2.0 * (v as f64 + 0.5) / self.height as f64) * tv;
            for u in 0..self.width {
                let ny = (1.0 - 2.0 * (u as f64 + 0.5) / self.width as f64) * th;
                rays.push(Vector3::new(1.0, ny, nz));
            }
        }
        rays
    }

    pub fn world_pose(&self, base: &Pose) -> Pose {
        base * self.mount.to_pose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderDiagnostic {
    CameraBelowTerrain,
    CameraOutsideTerrain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    /// Points in the sensor frame, stamped with the state time.
    pub cloud: PointCloud,
    pub diagnostic: Option<RenderDiagnostic>,
}

/// Ray-casts one depth image against the terrain and, optionally, the
/// robot's own links.
pub fn render_depth(
    camera: &CameraModel,
    base: &Pose,
    t: f64,
    hf: &Heightfield,
    body: Option<&PosedBody>,
) -> RenderOutput {
    let frame = Frame::Sensor(camera.id);
    let cam = camera.world_pose(base);
    let origin = Point3::from(cam.translation.vector);
    let empty = |d| RenderOutput { cloud: PointCloud::empty(t, frame), diagnostic: Some(d) };
    match hf.height_at(origin.x, origin.y) {
        Err(_) => return empty(RenderDiagnostic::CameraOutsideTerrain),
        Ok(h) if origin.z <= h => return empty(RenderDiagnostic::CameraBelowTerrain),
        Ok(_) => {}
    }
    let mut points = Vec::new();
    for ray in camera.unit_depth_rays() {
        let scale = ray.norm();
        let dir = cam.rotation * (ray / scale);
        let t_max = camera.max_range * scale;
        let mut hit = raycast(hf, &origin, &dir, t_max);
        if let Some(b) = body {
            if let Some(tb) = b.ray_intersect(&origin, &dir) {
                if tb <= t_max && hit.is_none_or(|th| tb < th) {
                    hit = Some(tb);
                }
            }
        }
        if let Some(th) = hit {
            let depth = th / scale;
            if depth >= camera.min_range && depth <= camera.max_range {
                points.push(Point3::from(ray * depth));
            }
        }
    }
    RenderOutput { cloud: PointCloud::new(t, frame, points), diagnostic: None }
}

/// First intersection of a ray (unit `dir`) with the piecewise-constant
/// column surface, by a 2D DDA over the cells the ray crosses.
pub(crate) fn raycast(hf: &Heightfield, o: &Point3<f64>, dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
    let res = hf.resolution();
    let lo = hf.origin();
    let hi = lo + nalgebra::Vector2::new(hf.cells_x() as f64, hf.cells_y() as f64) * res;

    // only the stretch of the ray below the highest column can hit anything
    let mut t_enter = 0.0f64;
    let hmax = hf.max_height();
    if o.z > hmax {
        if dir.z >= 0.0 {
            return None;
        }
        t_enter = (o.z - hmax) / -dir.z;
    }
    let mut t_exit = t_max;
    for axis in 0..2 {
        let (l, h) = (lo[axis], hi[axis]);
        if dir[axis].abs() < 1e-15 {
            if o[axis] < l || o[axis] >= h {
                return None;
            }
        } else {
            let ta = (l - o[axis]) / dir[axis];
            let tb = (h - o[axis]) / dir[axis];
            t_enter = t_enter.max(ta.min(tb));
            t_exit = t_exit.min(ta.max(tb));
        }
    }
    if t_enter > t_exit {
        return None;
    }

    let start = o + dir * t_enter;
    let clampi = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
    let mut ix = clampi((start.x - lo.x) / res, hf.cells_x()) as i64;
    let mut iy = clampi((start.y - lo.y) / res, hf.cells_y()) as i64;
    let step_x: i64 = if dir.x > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dir.y > 0.0 { 1 } else { -1 };
    let next_boundary = |i: i64, step: i64, l: f64, oc: f64, d: f64| -> f64 {
        if d.abs() < 1e-15 {
            return f64::INFINITY;
        }
        let edge = l + (i + if step > 0 { 1 } else { 0 }) as f64 * res;
        (edge - oc) / d
    };
    let mut t_next_x = next_boundary(ix, step_x, lo.x, o.x, dir.x);
    let mut t_next_y = next_boundary(iy, step_y, lo.y, o.y, dir.y);
    let dt_x = if dir.x.abs() < 1e-15 { f64::INFINITY } else { res / dir.x.abs() };
    let dt_y = if dir.y.abs() < 1e-15 { f64::INFINITY } else { res / dir.y.abs() };

    let mut t_in = t_enter;
    loop {
        let h = hf.cell(ix as usize, iy as usize);
        let t_out = t_next_x.min(t_next_y).min(t_exit);
        let z_in = o.z + dir.z * t_in;
        if z_in <= h {
            return Some(t_in);
        }
        let z_out = o.z + dir.z * t_out;
        if z_out <= h {
            return Some(t_in + (z_in - h) / -dir.z);
        }
        if t_out >= t_exit {
            return None;
        }
        if t_next_x < t_next_y {
            ix += step_x;
            t_in = t_next_x;
            t_next_x += dt_x;
        } else {
            iy += step_y;
            t_in = t_next_y;
            t_next_y += dt_y;
        }
        if ix < 0 || iy < 0 || ix >= hf.cells_x() as i64 || iy >= hf.cells_y() as i64 {
            return None;
        }
    }
}

/// Perturbs each point's depth along its ray and drops points at random.
pub fn inject_sensor_noise<R: Rng>(cloud: &PointCloud, noise: &NoiseModel, rng: &mut R) -> PointCloud {
    if noise.is_noiseless() {
        return cloud.clone();
    }
    let mut out = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        let drop: f64 = rng.random();
        let n: f64 = rng.sample(StandardNormal);
        if drop < noise.dropout {
            continue;
        }
        let depth = p.x;
        let delta = n * noise.sigma(depth);
        out.push(Point3::from(p.coords * (1.0 + delta / depth)));
    }
    cloud.with_points(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose_from_xyz_rpy;
    use crate::scene::{build_scene, Primitive, SceneSpec, WorldExtent};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn extent() -> WorldExtent {
        WorldExtent { x_min: -2.0, x_max: 3.0, y_min: -2.0, y_max: 2.0 }
    }

    fn down_camera(width: usize, height: usize) -> CameraModel {
        CameraModel {
            id: SensorId::Front,
            mount: MountPose { translation: [0.0; 3], rpy: [0.0, PI / 2.0, 0.0] },
            horizontal_fov: 1.0,
            vertical_fov: 0.8,
            width,
            height,
            min_range: 0.05,
            max_range: 3.0,
            rate: 30.0,
            noise: NoiseModel::default(),
        }
    }

    #[test]
    fn straight_down_over_flat_ground() {
        let hf = build_scene(&SceneSpec::flat(extent()), 0.01).unwrap();
        let cam = down_camera(32, 24);
        let base = pose_from_xyz_rpy(Vector3::new(0.3, 0.1, 0.4), 0.0, 0.0, 0.7);
        let out = render_depth(&cam, &base, 1.0, &hf, None);
        assert_eq!(out.diagnostic, None);
        assert_eq!(out.cloud.len(), 32 * 24);
        assert_eq!(out.cloud.frame, Frame::Sensor(SensorId::Front));
        for p in &out.cloud.points {
            assert!((p.x - 0.4).abs() < 1e-6);
        }
    }

    #[test]
    fn step_edge_splits_into_two_depth_populations() {
        let step = 0.225;
        let spec = SceneSpec {
            extent: extent(),
            primitives: vec![Primitive::Step { x_start: 1.0, height: step, depth: 0.5 }],
        };
        let hf = build_scene(&spec, 0.01).unwrap();
        let cam = down_camera(40, 30);
        // above the tread, so the riser faces away from the camera
        let base = pose_from_xyz_rpy(Vector3::new(1.05, 0.0, 0.4), 0.0, 0.0, 0.0);
        let out = render_depth(&cam, &base, 0.0, &hf, None);
        let pose = cam.world_pose(&base);
        let o = pose.translation.vector;
        let mut top = 0;
        let mut floor = 0;
        for (ray, p) in cam.unit_depth_rays().iter().zip(&out.cloud.points) {
            // analytic oracle: intersect with the tread plane, fall back to the floor
            let d = pose.rotation * ray;
            let t_top = (o.z - step) / -d.z;
            let hit_top = o + d * t_top;
            let expected = if (1.0..1.5).contains(&hit_top.x) { hit_top } else { o + d * (o.z / -d.z) };
            let w = pose * p;
            assert!((w.coords - expected).norm() < 1e-9);
            if (w.z - step).abs() < 1e-9 {
                top += 1;
            } else {
                assert!(w.z.abs() < 1e-9);
                floor += 1;
            }
        }
        assert!(top > 0 && floor > 0);
        let depths: Vec<f64> = out.cloud.points.iter().map(|p| p.x).collect();
        let near = depths.iter().cloned().fold(f64::MAX, f64::min);
        let far = depths.iter().cloned().fold(f64::MIN, f64::max);
        assert!((far - near - step).abs() < 1e-9);
    }

    #[test]
    fn range_gate_empties_far_terrain() {
        let hf = build_scene(&SceneSpec::flat(extent()), 0.01).unwrap();
        let mut cam = down_camera(16, 12);
        cam.max_range = 3.0;
        let base = pose_from_xyz_rpy(Vector3::new(0.0, 0.0, 5.0), 0.0, 0.0, 0.0);
        let out = render_depth(&cam, &base, 0.0, &hf, None);
        assert!(out.cloud.is_empty());
        assert_eq!(out.diagnostic, None);
    }

    #[test]
    fn camera_below_terrain_reports() {
        let spec = SceneSpec {
            extent: extent(),
            primitives: vec![Primitive::Step { x_start: -1.0, height: 0.6, depth: 2.0 }],
        };
        let hf = build_scene(&spec, 0.01).unwrap();
        let base = pose_from_xyz_rpy(Vector3::new(0.0, 0.0, 0.4), 0.0, 0.0, 0.0);
        let out = render_depth(&down_camera(8, 8), &base, 0.0, &hf, None);
        assert!(out.cloud.is_empty());
        assert_eq!(out.diagnostic, Some(RenderDiagnostic::CameraBelowTerrain));
    }

    #[test]
    fn rendered_points_lie_on_the_surface() {
        let spec = SceneSpec {
            extent: extent(),
            primitives: vec![Primitive::Platform {
                x_start: 0.6,
                rise_steps: vec![crate::scene::Rise { height: 0.1, depth: 0.3 }],
                platform_height: 0.2,
                platform_length: 0.3,
                ramp_slope: 0.4,
            }],
        };
        let hf = build_scene(&spec, 0.01).unwrap();
        let cam = CameraModel::front_stereo();
        let base = pose_from_xyz_rpy(Vector3::new(0.2, 0.05, 0.3), 0.0, 0.0, 0.2);
        let out = render_depth(&cam, &base, 0.0, &hf, None);
        assert!(out.cloud.len() > 1000);
        let pose = cam.world_pose(&base);
        let res = hf.resolution();
        for p in &out.cloud.points {
            let w = pose * p;
            let mut lo = f64::MAX;
            let mut hi = f64::MIN;
            for dx in [-1.0, 0.0, 1.0] {
                for dy in [-1.0, 0.0, 1.0] {
                    if let Ok(h) = hf.height_at(w.x + dx * res, w.y + dy * res) {
                        lo = lo.min(h);
                        hi = hi.max(h);
                    }
                }
            }
            assert!(w.z >= lo - 1e-9 && w.z <= hi + 1e-9, "{w:?}");
        }
    }

    #[test]
    fn body_occludes_terrain() {
        use crate::cloudfilter::BodyModel;
        let hf = build_scene(&SceneSpec::flat(extent()), 0.01).unwrap();
        let cam = CameraModel::rear_tof();
        let base = pose_from_xyz_rpy(Vector3::new(0.0, 0.0, 0.3), 0.0, 0.0, 0.0);
        let q = [0.0, 0.85, -1.7, 0.0, 0.85, -1.7, 0.0, 0.85, -1.7, 0.0, 0.85, -1.7];
        let posed = BodyModel::default().pose(&base, &q);
        let with_body = render_depth(&cam, &base, 0.0, &hf, Some(&posed));
        let bare = render_depth(&cam, &base, 0.0, &hf, None);
        let pose = cam.world_pose(&base);
        let above_ground = with_body.cloud.points.iter().filter(|p| (pose * *p).z > 0.01).count();
        assert!(above_ground > 0, "the front legs should be in view");
        assert!(bare.cloud.points.iter().all(|p| (pose * p).z.abs() < 1e-9));
    }

    #[test]
    fn noiseless_model_is_identity_and_full_dropout_empties() {
        let cloud = PointCloud::new(
            0.0,
            Frame::Sensor(SensorId::Front),
            (1..50).map(|i| Point3::new(0.1 * i as f64, 0.01, -0.02)).collect(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(inject_sensor_noise(&cloud, &NoiseModel::default(), &mut rng), cloud);
        let drop_all = NoiseModel { dropout: 1.0, ..Default::default() };
        assert!(inject_sensor_noise(&cloud, &drop_all, &mut rng).is_empty());
    }

    #[test]
    fn depth_noise_has_configured_std() {
        let n = 100_000;
        let cloud = PointCloud::new(
            0.0,
            Frame::Sensor(SensorId::Front),
            (0..n).map(|i| Point3::new(0.8, 0.3 * ((i % 7) as f64 - 3.0) / 3.0, -0.1)).collect(),
        );
        let model = NoiseModel { sigma0: 0.01, range_coeff: 0.0, dropout: 0.0 };
        let noisy = inject_sensor_noise(&cloud, &model, &mut ChaCha8Rng::seed_from_u64(11));
        let deltas: Vec<f64> = noisy.points.iter().zip(&cloud.points).map(|(a, b)| a.x - b.x).collect();
        let mean = deltas.iter().sum::<f64>() / n as f64;
        let std = (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((std - 0.01).abs() < 0.0005, "{std}");
        // perturbation stays on the ray
        for (a, b) in noisy.points.iter().zip(&cloud.points).take(100) {
            assert!(a.coords.normalize().dot(&b.coords.normalize()) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let cloud = PointCloud::new(
            0.0,
            Frame::Sensor(SensorId::Rear),
            (1..200).map(|i| Point3::new(0.5 + 0.001 * i as f64, 0.0, 0.0)).collect(),
        );
        let model = CameraModel::rear_tof().noise;
        let a = inject_sensor_noise(&cloud, &model, &mut ChaCha8Rng::seed_from_u64(5));
        let b = inject_sensor_noise(&cloud, &model, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn default_cameras_validate() {
        assert!(CameraModel::front_stereo().validate().is_ok());
        assert!(CameraModel::rear_tof().validate().is_ok());
        let mut bad = CameraModel::front_stereo();
        bad.horizontal_fov = PI;
        assert_eq!(bad.validate(), Err(CameraError::FieldOfView("front")));
    }
}
