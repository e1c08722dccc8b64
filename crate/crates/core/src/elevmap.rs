//! Robot-centric 2.5D elevation map.
//!
//! A fixed square window of cells stored as a ring buffer, so recentering
//! only touches the rows and columns that scroll in. Each cell carries a
//! scalar Kalman estimate of its height.

use std::io::{self, Write};

use nalgebra::{Point3, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloudfilter::PointCloud;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map resolution must be positive, got {0}")]
    Resolution(f64),
    #[error("map window {0:.3} m exceeds the 5 m limit")]
    TooLarge(f64),
    #[error("map needs at least one cell per side")]
    Empty,
    #[error("base variance must be positive and all variance terms non-negative")]
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub resolution: f64,
    /// Cells per side.
    pub size: usize,
    /// Drift compensation ignores points further than this from the map.
    pub drift_gate: f64,
    pub drift_min_points: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self { resolution: 0.025, size: 200, drift_gate: 0.10, drift_min_points: 20 }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<(), MapError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(MapError::Resolution(self.resolution));
        }
        if self.size == 0 {
            return Err(MapError::Empty);
        }
        let side = self.size as f64 * self.resolution;
        if side > 5.0 + 1e-9 {
            return Err(MapError::TooLarge(side));
        }
        Ok(())
    }
}

/// Measurement variance sigma0^2 + range_coeff * range^2, inflated by
/// `time_rate` per second between updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorVarianceModel {
    pub base_variance: f64,
    pub range_coeff: f64,
    pub time_rate: f64,
}

impl SensorVarianceModel {
    pub fn validate(&self) -> Result<(), MapError> {
        let ok = self.base_variance > 0.0 && self.range_coeff >= 0.0 && self.time_rate >= 0.0;
        if ok && self.base_variance.is_finite() && self.range_coeff.is_finite() && self.time_rate.is_finite() {
            Ok(())
        } else {
            Err(MapError::Variance)
        }
    }

    pub fn measurement_variance(&self, range: f64) -> f64 {
        self.base_variance + self.range_coeff * range * range
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub height: f64,
    pub variance: f64,
    pub valid: bool,
    pub last_update: f64,
}

impl Cell {
    const EMPTY: Cell = Cell { height: 0.0, variance: 0.0, valid: false, last_update: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellEstimate {
    pub height: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrateStats {
    pub updated: usize,
    pub outside: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DriftResult {
    pub shift: f64,
    /// Points that passed the gate.
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElevationMap {
    cfg: MapConfig,
    center: Vector2<f64>,
    /// Ring offsets: logical index i lives at physical (i + offset) mod size.
    offset: [usize; 2],
    cells: Vec<Cell>,
    z_shift: f64,
    last_update: f64,
}

impl ElevationMap {
    /// Empty map centred on the lattice point nearest `center`.
    pub fn new(cfg: MapConfig, center: Vector2<f64>) -> Result<Self, MapError> {
        cfg.validate()?;
        let res = cfg.resolution;
        Ok(Self {
            cfg,
            center: center.map(|c| (c / res).round() * res),
            offset: [0, 0],
            cells: vec![Cell::EMPTY; cfg.size * cfg.size],
            z_shift: 0.0,
            last_update: f64::NEG_INFINITY,
        })
    }

    pub fn config(&self) -> &MapConfig {
        &self.cfg
    }

    pub fn resolution(&self) -> f64 {
        self.cfg.resolution
    }

    pub fn size(&self) -> usize {
        self.cfg.size
    }

    pub fn center(&self) -> Vector2<f64> {
        self.center
    }

    /// Sum of all drift corrections applied so far.
    pub fn accumulated_shift(&self) -> f64 {
        self.z_shift
    }

    fn half(&self) -> f64 {
        0.5 * self.cfg.size as f64
    }

    /// Logical index of the cell containing (x, y), if inside the window.
    pub fn index_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let n = self.cfg.size as f64;
        let fi = ((x - self.center.x) / self.cfg.resolution + self.half()).floor();
        let fj = ((y - self.center.y) / self.cfg.resolution + self.half()).floor();
        if fi >= 0.0 && fj >= 0.0 && fi < n && fj < n {
            Some((fi as usize, fj as usize))
        } else {
            None
        }
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vector2<f64> {
        let res = self.cfg.resolution;
        self.center + Vector2::new(i as f64 + 0.5 - self.half(), j as f64 + 0.5 - self.half()) * res
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let n = self.cfg.size;
        ((j + self.offset[1]) % n) * n + (i + self.offset[0]) % n
    }

    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[self.slot(i, j)]
    }

    pub fn valid_count(&self) -> usize {
        self.cells.iter().filter(|c| c.valid).count()
    }

    /// Fuses a world-frame cloud. Points are applied in input order, one
    /// scalar Kalman update each.
    pub fn integrate_cloud(
        &mut self,
        cloud: &PointCloud,
        sensor_origin: &Point3<f64>,
        model: &SensorVarianceModel,
        t: f64,
    ) -> IntegrateStats {
        let mut stats = IntegrateStats::default();
        for p in &cloud.points {
            let Some((i, j)) = self.index_of(p.x, p.y) else {
                stats.outside += 1;
                continue;
            };
            let meas = model.measurement_variance((p - sensor_origin).norm());
            let slot = self.slot(i, j);
            let c = &mut self.cells[slot];
            if !c.valid {
                *c = Cell { height: p.z, variance: meas, valid: true, last_update: t };
            } else {
                let prior = c.variance + model.time_rate * (t - c.last_update).max(0.0);
                let gain = prior / (prior + meas);
                c.height += gain * (p.z - c.height);
                c.variance = prior * meas / (prior + meas);
                c.last_update = t;
            }
            stats.updated += 1;
        }
        self.last_update = self.last_update.max(t);
        stats
    }

    /// Mean discrepancy between the cloud and the map over gated points.
    pub fn drift_estimate(&self, cloud: &PointCloud) -> DriftResult {
        let mut sum = 0.0;
        let mut used = 0;
        for p in &cloud.points {
            if let Some(est) = self.query_height(p.x, p.y) {
                let d = p.z - est.height;
                if d.abs() < self.cfg.drift_gate {
                    sum += d;
                    used += 1;
                }
            }
        }
        if used < self.cfg.drift_min_points.max(1) {
            return DriftResult { shift: 0.0, used };
        }
        DriftResult { shift: sum / used as f64, used }
    }

    /// Shifts every valid cell by the gated mean discrepancy to the cloud.
    pub fn drift_compensate(&mut self, cloud: &PointCloud) -> DriftResult {
        let r = self.drift_estimate(cloud);
        if r.shift != 0.0 {
            for c in self.cells.iter_mut().filter(|c| c.valid) {
                c.height += r.shift;
            }
            self.z_shift += r.shift;
        }
        r
    }

    /// Scrolls the window by whole cells towards `robot_xy`. Moves of less
    /// than one cell are ignored.
    pub fn recenter(&mut self, robot_xy: Vector2<f64>) {
        let res = self.cfg.resolution;
        let n = self.cfg.size as i64;
        let kx = ((robot_xy.x - self.center.x) / res).trunc() as i64;
        let ky = ((robot_xy.y - self.center.y) / res).trunc() as i64;
        if kx == 0 && ky == 0 {
            return;
        }
        if kx.abs() >= n || ky.abs() >= n {
            self.cells.fill(Cell::EMPTY);
            self.offset = [0, 0];
        } else {
            self.shift_axis(0, kx);
            self.shift_axis(1, ky);
        }
        self.center += Vector2::new(kx as f64, ky as f64) * res;
    }

    fn shift_axis(&mut self, axis: usize, k: i64) {
        if k == 0 {
            return;
        }
        let n = self.cfg.size;
        self.offset[axis] = (self.offset[axis] as i64 + k).rem_euclid(n as i64) as usize;
        // the |k| logical rows/columns at the leading edge are new ground
        let fresh: Vec<usize> = if k > 0 { (n - k as usize..n).collect() } else { (0..(-k) as usize).collect() };
        for a in fresh {
            for b in 0..n {
                let (i, j) = if axis == 0 { (a, b) } else { (b, a) };
                let s = self.slot(i, j);
                self.cells[s] = Cell::EMPTY;
            }
        }
    }

    /// Height and variance of a valid in-window cell; `None` otherwise.
    pub fn query_height(&self, x: f64, y: f64) -> Option<CellEstimate> {
        let (i, j) = self.index_of(x, y)?;
        let c = self.cell(i, j);
        c.valid.then_some(CellEstimate { height: c.height, variance: c.variance })
    }

    /// Centres of valid cells inside a rectangle with the given centre and
    /// heading, as 3D points.
    pub fn cells_in_rect(&self, center: Vector2<f64>, yaw: f64, length: f64, width: f64) -> Vec<Point3<f64>> {
        let (s, c) = yaw.sin_cos();
        let hl = 0.5 * length;
        let hw = 0.5 * width;
        // bounding box of the rotated rectangle, in cells
        let ex = hl * c.abs() + hw * s.abs();
        let ey = hl * s.abs() + hw * c.abs();
        let lo = self.index_bounds(center.x - ex, center.y - ey);
        let hi = self.index_bounds(center.x + ex, center.y + ey);
        let mut out = Vec::new();
        for j in lo.1..=hi.1 {
            for i in lo.0..=hi.0 {
                let cell = self.cell(i, j);
                if !cell.valid {
                    continue;
                }
                let w = self.cell_center(i, j);
                let d = w - center;
                let along = c * d.x + s * d.y;
                let across = -s * d.x + c * d.y;
                if along.abs() <= hl && across.abs() <= hw {
                    out.push(Point3::new(w.x, w.y, cell.height));
                }
            }
        }
        out
    }

    fn index_bounds(&self, x: f64, y: f64) -> (usize, usize) {
        let n = self.cfg.size as f64;
        let f = |v: f64, c: f64| ((v - c) / self.cfg.resolution + self.half()).floor().clamp(0.0, n - 1.0) as usize;
        (f(x, self.center.x), f(y, self.center.y))
    }

    /// CSV snapshot: a header row, then the height layer and the variance
    /// layer, one grid row (constant y) per line, NaN for invalid cells.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "center_x,center_y,resolution,shift,cells")?;
        writeln!(w, "{},{},{},{},{}", self.center.x, self.center.y, self.cfg.resolution, self.z_shift, self.cfg.size)?;
        for (name, pick) in [("height", 0), ("variance", 1)] {
            writeln!(w, "# {name}")?;
            for j in 0..self.cfg.size {
                let row: Vec<String> = (0..self.cfg.size)
                    .map(|i| {
                        let c = self.cell(i, j);
                        match (c.valid, pick) {
                            (false, _) => "NaN".to_string(),
                            (true, 0) => format!("{}", c.height),
                            (true, _) => format!("{}", c.variance),
                        }
                    })
                    .collect();
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}
