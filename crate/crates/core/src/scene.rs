//! Parametric ground-truth terrain.
//!
//! A [`SceneSpec`] lists primitives laid out along the world x axis (steps
//! span the full world width). [`build_scene`] samples the analytic profile
//! at cell centres into a [`Heightfield`] whose lookups are piecewise
//! constant, so vertical faces stay cell-sharp.

use std::io::{self, Write};

use nalgebra::{Point3, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloudfilter::{Frame, PointCloud};
use crate::geometry::{rotate2, yaw_of, Pose};

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("primitive {first} [{first_start:.3}, {first_end:.3}) overlaps primitive {second} [{second_start:.3}, {second_end:.3}) along x")]
    Overlap {
        first: usize,
        first_start: f64,
        first_end: f64,
        second: usize,
        second_start: f64,
        second_end: f64,
    },
    #[error("primitive {index}: {reason}")]
    InvalidPrimitive { index: usize, reason: String },
    #[error("invalid world extent: {0}")]
    InvalidExtent(String),
    #[error("resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("({x:.4}, {y:.4}) lies outside the heightfield")]
    OutOfBounds { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldExtent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rise {
    /// Absolute height of the tread above the base level.
    pub height: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Primitive {
    /// Constant height over `[x_start, x_start + length)`, or over the whole
    /// world when no range is given.
    FlatRegion {
        z: f64,
        #[serde(default)]
        x_start: Option<f64>,
        #[serde(default)]
        length: Option<f64>,
    },
    Step { x_start: f64, height: f64, depth: f64 },
    /// Rising treads, a level platform, then a downward ramp back to the base level.
    Platform {
        x_start: f64,
        rise_steps: Vec<Rise>,
        platform_height: f64,
        platform_length: f64,
        ramp_slope: f64,
    },
}

impl Primitive {
    /// Half-open x interval covered by the primitive.
    fn x_range(&self, extent: &WorldExtent) -> (f64, f64) {
        match self {
            Primitive::FlatRegion { x_start, length, .. } => match (x_start, length) {
                (Some(s), Some(l)) => (*s, s + l),
                _ => (extent.x_min, extent.x_max),
            },
            Primitive::Step { x_start, depth, .. } => (*x_start, x_start + depth),
            Primitive::Platform { x_start, rise_steps, platform_height, platform_length, ramp_slope } => {
                let treads: f64 = rise_steps.iter().map(|r| r.depth).sum();
                (*x_start, x_start + treads + platform_length + platform_height / ramp_slope)
            }
        }
    }

    fn validate(&self, index: usize) -> Result<(), SceneError> {
        let bad = |reason: &str| Err(SceneError::InvalidPrimitive { index, reason: reason.into() });
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        match self {
            Primitive::FlatRegion { z, x_start, length } => {
                if !z.is_finite() {
                    return bad("height must be finite");
                }
                if x_start.is_some() != length.is_some() {
                    return bad("x_start and length must be given together");
                }
                if let Some(l) = length {
                    if !finite_pos(*l) {
                        return bad("length must be positive");
                    }
                }
            }
            Primitive::Step { height, depth, .. } => {
                if !finite_pos(*height) || !finite_pos(*depth) {
                    return bad("step height and depth must be positive");
                }
            }
            Primitive::Platform { rise_steps, platform_height, platform_length, ramp_slope, .. } => {
                if rise_steps.iter().any(|r| !finite_pos(r.height) || !finite_pos(r.depth)) {
                    return bad("rise heights and depths must be positive");
                }
                if !finite_pos(*platform_height) || !finite_pos(*platform_length) || !finite_pos(*ramp_slope) {
                    return bad("platform height, length and ramp slope must be positive");
                }
            }
        }
        Ok(())
    }

    /// Analytic height at `x`, `None` outside the primitive.
    fn height(&self, x: f64, extent: &WorldExtent) -> Option<f64> {
        let (start, end) = self.x_range(extent);
        if x < start || x >= end {
            return None;
        }
        Some(match self {
            Primitive::FlatRegion { z, .. } => *z,
            Primitive::Step { height, .. } => *height,
            Primitive::Platform { x_start, rise_steps, platform_height, platform_length, ramp_slope } => {
                let mut edge = *x_start;
                for r in rise_steps {
                    edge += r.depth;
                    if x < edge {
                        return Some(r.height);
                    }
                }
                edge += platform_length;
                if x < edge {
                    *platform_height
                } else {
                    platform_height - ramp_slope * (x - edge)
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub extent: WorldExtent,
    #[serde(default)]
    pub primitives: Vec<Primitive>,
}

impl SceneSpec {
    pub fn flat(extent: WorldExtent) -> Self {
        Self { extent, primitives: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let e = &self.extent;
        if !(e.x_max > e.x_min && e.y_max > e.y_min) || ![e.x_min, e.x_max, e.y_min, e.y_max].iter().all(|v| v.is_finite()) {
            return Err(SceneError::InvalidExtent(format!("{e:?}")));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            p.validate(i)?;
        }
        let ranges: Vec<_> = self.primitives.iter().map(|p| p.x_range(e)).collect();
        for i in 0..ranges.len() {
            for j in i + 1..ranges.len() {
                let (a0, a1) = ranges[i];
                let (b0, b1) = ranges[j];
                if a0 < b1 && b0 < a1 {
                    return Err(SceneError::Overlap {
                        first: i,
                        first_start: a0,
                        first_end: a1,
                        second: j,
                        second_start: b0,
                        second_end: b1,
                    });
                }
            }
        }
        Ok(())
    }

    /// Analytic terrain height; base level is zero.
    pub fn analytic_height(&self, x: f64) -> f64 {
        self.primitives
            .iter()
            .find_map(|p| p.height(x, &self.extent))
            .unwrap_or(0.0)
    }
}

/// Dense z-grid, row-major with rows along y.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    resolution: f64,
    /// World xy of the lower corner of cell (0, 0).
    origin: Vector2<f64>,
    cells_x: usize,
    cells_y: usize,
    cells: Vec<f64>,
    max_height: f64,
}

impl Heightfield {
    pub fn from_cells(
        resolution: f64,
        origin: Vector2<f64>,
        cells_x: usize,
        cells_y: usize,
        cells: Vec<f64>,
    ) -> Result<Self, SceneError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(SceneError::InvalidResolution(resolution));
        }
        if cells_x == 0 || cells_y == 0 || cells.len() != cells_x * cells_y {
            return Err(SceneError::InvalidExtent(format!(
                "{cells_x}x{cells_y} grid with {} values",
                cells.len()
            )));
        }
        if cells.iter().any(|h| !h.is_finite()) {
            return Err(SceneError::InvalidExtent("non-finite height".into()));
        }
        let max_height = cells.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { resolution, origin, cells_x, cells_y, cells, max_height })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn cells_x(&self) -> usize {
        self.cells_x
    }

    pub fn cells_y(&self) -> usize {
        self.cells_y
    }

    pub fn max_height(&self) -> f64 {
        self.max_height
    }

    pub fn cell(&self, ix: usize, iy: usize) -> f64 {
        self.cells[iy * self.cells_x + ix]
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vector2<f64> {
        self.origin + Vector2::new(ix as f64 + 0.5, iy as f64 + 0.5) * self.resolution
    }

    /// Cell containing (x, y), if any.
    pub fn cell_index(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin.x) / self.resolution).floor();
        let fy = ((y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.cells_x as f64 || fy >= self.cells_y as f64 || fx.is_nan() || fy.is_nan() {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    /// Piecewise-constant height lookup.
    pub fn height_at(&self, x: f64, y: f64) -> Result<f64, SceneError> {
        self.cell_index(x, y)
            .map(|(ix, iy)| self.cell(ix, iy))
            .ok_or(SceneError::OutOfBounds { x, y })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell_index(x, y).is_some()
    }

    /// CSV export: a header row naming the grid parameters, their values,
    /// then one row of heights per y index.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "resolution,origin_x,origin_y,cells_x,cells_y")?;
        writeln!(w, "{},{},{},{},{}", self.resolution, self.origin.x, self.origin.y, self.cells_x, self.cells_y)?;
        for row in self.cells.chunks(self.cells_x) {
            let line: Vec<String> = row.iter().map(|h| h.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Samples every primitive at cell centres.
pub fn build_scene(spec: &SceneSpec, resolution: f64) -> Result<Heightfield, SceneError> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(SceneError::InvalidResolution(resolution));
    }
    spec.validate()?;
    let e = &spec.extent;
    let cells_x = (((e.x_max - e.x_min) / resolution) - 1e-9).ceil().max(1.0) as usize;
    let cells_y = (((e.y_max - e.y_min) / resolution) - 1e-9).ceil().max(1.0) as usize;
    let origin = Vector2::new(e.x_min, e.y_min);
    // steps span the whole width, so one profile row serves all y
    let profile: Vec<f64> = (0..cells_x)
        .map(|ix| spec.analytic_height(origin.x + (ix as f64 + 0.5) * resolution))
        .collect();
    let mut cells = Vec::with_capacity(cells_x * cells_y);
    for _ in 0..cells_y {
        cells.extend_from_slice(&profile);
    }
    Heightfield::from_cells(resolution, origin, cells_x, cells_y, cells)
}

/// Rectangle around the base, long side forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchRegion {
    pub length: f64,
    pub width: f64,
    pub resolution: f64,
}

impl Default for PatchRegion {
    fn default() -> Self {
        Self { length: 0.5, width: 0.3, resolution: 0.0175 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPatch {
    pub cloud: PointCloud,
    /// Lattice points that fell outside the heightfield.
    pub clipped: usize,
}

/// Ground-truth points on a yaw-aligned lattice around the base.
pub fn ground_truth_patch(hf: &Heightfield, base: &Pose, region: &PatchRegion) -> GroundTruthPatch {
    let nx = ((region.length / region.resolution) - 1e-9).ceil().max(1.0) as usize;
    let ny = ((region.width / region.resolution) - 1e-9).ceil().max(1.0) as usize;
    let yaw = yaw_of(&base.rotation);
    let center = base.translation.vector.xy();
    let mut points = Vec::with_capacity(nx * ny);
    let mut clipped = 0;
    for j in 0..ny {
        for i in 0..nx {
            let local = Vector2::new(
                (i as f64 + 0.5 - nx as f64 / 2.0) * region.resolution,
                (j as f64 + 0.5 - ny as f64 / 2.0) * region.resolution,
            );
            let w = center + rotate2(yaw, local);
            match hf.height_at(w.x, w.y) {
                Ok(z) => points.push(Point3::new(w.x, w.y, z)),
                Err(_) => clipped += 1,
            }
        }
    }
    GroundTruthPatch { cloud: PointCloud::new(0.0, Frame::World, points), clipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose_from_xyz_rpy;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn extent(x: f64, y: f64) -> WorldExtent {
        WorldExtent { x_min: 0.0, x_max: x, y_min: -y / 2.0, y_max: y / 2.0 }
    }

    fn step_spec() -> SceneSpec {
        SceneSpec {
            extent: extent(3.0, 2.0),
            primitives: vec![Primitive::Step { x_start: 1.0, height: 0.225, depth: 0.30 }],
        }
    }

    pub(crate) fn obstacle_spec() -> SceneSpec {
        SceneSpec {
            extent: extent(5.0, 2.0),
            primitives: vec![Primitive::Platform {
                x_start: 1.0,
                rise_steps: vec![Rise { height: 0.10, depth: 0.30 }, Rise { height: 0.20, depth: 0.30 }],
                platform_height: 0.30,
                platform_length: 0.60,
                ramp_slope: 0.3,
            }],
        }
    }

    #[test]
    fn flat_world_is_zero_everywhere() {
        let hf = build_scene(&SceneSpec::flat(extent(2.0, 2.0)), 0.025).unwrap();
        assert_eq!((hf.cells_x(), hf.cells_y()), (80, 80));
        assert!(hf.cells.iter().all(|&h| h == 0.0));
        assert_eq!(hf.height_at(1.234, -0.5).unwrap(), 0.0);
    }

    #[test]
    fn step_cells_follow_the_half_open_interval() {
        let hf = build_scene(&step_spec(), 0.025).unwrap();
        for ix in 0..hf.cells_x() {
            let x = hf.cell_center(ix, 0).x;
            let expected = if (1.0..1.3).contains(&x) { 0.225 } else { 0.0 };
            assert_eq!(hf.cell(ix, 5), expected, "x = {x}");
        }
    }

    #[test]
    fn faces_are_cell_sharp() {
        let hf = build_scene(&step_spec(), 0.025).unwrap();
        assert_eq!(hf.height_at(0.999, 0.0).unwrap(), 0.0);
        assert_eq!(hf.height_at(1.001, 0.0).unwrap(), 0.225);
        assert_eq!(hf.height_at(1.299, 0.0).unwrap(), 0.225);
        assert_eq!(hf.height_at(1.301, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn obstacle_geometry() {
        let spec = obstacle_spec();
        let hf = build_scene(&spec, 0.01).unwrap();
        assert_eq!(hf.height_at(1.15, 0.0).unwrap(), 0.10);
        assert_eq!(hf.height_at(1.45, 0.0).unwrap(), 0.20);
        // past the second rise: platform
        for x in [1.605, 1.9, 2.195] {
            assert_eq!(hf.height_at(x, 0.3).unwrap(), 0.30);
        }
        let ramp = hf.height_at(2.705, 0.0).unwrap();
        assert!((ramp - (0.30 - 0.3 * 0.505)).abs() < 1e-12);
        assert_eq!(hf.height_at(3.3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn sampled_step_equals_analytic_at_centres() {
        let spec = step_spec();
        let hf = build_scene(&spec, 0.01).unwrap();
        let worst = (0..hf.cells_x())
            .map(|ix| (hf.cell(ix, 0) - spec.analytic_height(hf.cell_center(ix, 0).x)).abs())
            .fold(0.0, f64::max);
        assert_eq!(worst, 0.0);
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_scene(&obstacle_spec(), 0.01).unwrap();
        let b = build_scene(&obstacle_spec(), 0.01).unwrap();
        assert!(a.cells.iter().zip(&b.cells).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn overlapping_primitives_are_rejected() {
        let spec = SceneSpec {
            extent: extent(3.0, 1.0),
            primitives: vec![
                Primitive::Step { x_start: 1.0, height: 0.1, depth: 0.3 },
                Primitive::Step { x_start: 1.2, height: 0.2, depth: 0.3 },
            ],
        };
        let err = build_scene(&spec, 0.01).unwrap_err();
        assert!(matches!(err, SceneError::Overlap { first: 0, second: 1, .. }));
        assert!(err.to_string().contains("overlaps"));
    }

    #[test]
    fn out_of_extent_is_explicit() {
        let hf = build_scene(&step_spec(), 0.025).unwrap();
        assert_eq!(hf.height_at(-0.01, 0.0), Err(SceneError::OutOfBounds { x: -0.01, y: 0.0 }));
        assert!(hf.height_at(3.5, 0.0).is_err());
        assert!(hf.height_at(1.0, 1.01).is_err());
    }

    #[test]
    fn lookup_agrees_with_direct_indexing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (nx, ny, res) = (60, 40, 0.05);
        let cells: Vec<f64> = (0..nx * ny).map(|_| rng.random_range(-0.2..0.4)).collect();
        let origin = Vector2::new(-1.0, 0.5);
        let hf = Heightfield::from_cells(res, origin, nx, ny, cells.clone()).unwrap();
        for _ in 0..1000 {
            let x = rng.random_range(origin.x..origin.x + nx as f64 * res);
            let y = rng.random_range(origin.y..origin.y + ny as f64 * res);
            let ix = ((x - origin.x) / res) as usize;
            let iy = ((y - origin.y) / res) as usize;
            assert_eq!(hf.height_at(x, y).unwrap(), cells[iy * nx + ix]);
        }
    }

    #[test]
    fn patch_counts_and_orientation() {
        let hf = build_scene(&SceneSpec::flat(extent(4.0, 4.0)), 0.01).unwrap();
        let region = PatchRegion::default();
        let base = pose_from_xyz_rpy(Vector3::new(2.0, 0.0, 0.3), 0.0, 0.0, 0.0);
        let patch = ground_truth_patch(&hf, &base, &region);
        let nx = (0.5f64 / 0.0175).ceil() as usize;
        let ny = (0.3f64 / 0.0175).ceil() as usize;
        assert_eq!(patch.cloud.len(), nx * ny);
        assert_eq!(patch.clipped, 0);
        assert!(patch.cloud.points.iter().all(|p| p.z == 0.0));

        // translation invariance of the count
        let moved = pose_from_xyz_rpy(Vector3::new(2.73, 0.41, 0.3), 0.0, 0.0, 0.0);
        assert_eq!(ground_truth_patch(&hf, &moved, &region).cloud.len(), nx * ny);

        // yawed 90 degrees: long axis along world y
        let yawed = pose_from_xyz_rpy(Vector3::new(2.0, 0.0, 0.3), 0.0, 0.0, FRAC_PI_2);
        let p = ground_truth_patch(&hf, &yawed, &region).cloud;
        let span = |f: fn(&Point3<f64>) -> f64| {
            let v: Vec<f64> = p.points.iter().map(f).collect();
            v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
        };
        assert!(span(|q| q.y) > span(|q| q.x));
    }

    #[test]
    fn patch_clips_at_the_border() {
        let hf = build_scene(&SceneSpec::flat(extent(4.0, 4.0)), 0.01).unwrap();
        let base = pose_from_xyz_rpy(Vector3::new(0.05, 0.0, 0.3), 0.0, 0.0, 0.0);
        let patch = ground_truth_patch(&hf, &base, &PatchRegion::default());
        assert!(patch.clipped > 0);
        assert_eq!(patch.clipped + patch.cloud.len(), 29 * 18);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let hf = build_scene(&step_spec(), 0.1).unwrap();
        let mut buf = Vec::new();
        hf.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "resolution,origin_x,origin_y,cells_x,cells_y");
        assert_eq!(lines[1], "0.1,0,-1,30,20");
        assert_eq!(lines.len(), 2 + 20);
        assert_eq!(lines[2].split(',').count(), 30);
    }
}
