//! Evaluation metrics and their serialisable reports.

mod chamfer;
mod rte;
mod tracking;

pub use chamfer::{chamfer_one_way, map_vs_ground_truth, ChamferResult, MapWindow};
pub use rte::{rte, RteResult, TrajectorySample};
pub use tracking::{tracking_rms, TrackingResult, VelocitySample};

use std::io::{self, Write};

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("target point set is empty")]
    EmptyTarget,
    #[error("trajectory covers {available:.3} m, a segment needs {required:.3} m")]
    InsufficientLength { available: f64, required: f64 },
    #[error("estimate does not cover the ground-truth time range")]
    NoOverlap,
    #[error("timestamps must be strictly increasing")]
    NonMonotonicTime,
    #[error("no samples after the settling time")]
    NoSamples,
}

/// One metric over a run, tagged with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub unit: String,
    pub tag: String,
    pub windows: Vec<f64>,
    /// NaN when no window had data; JSON stores that as `null`.
    #[serde(deserialize_with = "nan_from_null")]
    pub mean: f64,
    /// Windows excluded for lack of data.
    #[serde(default)]
    pub missing: usize,
}

fn nan_from_null<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl MetricReport {
    pub fn new(metric: &str, unit: &str, tag: &str, windows: Vec<f64>, missing: usize) -> Self {
        let mean = if windows.is_empty() { f64::NAN } else { windows.iter().sum::<f64>() / windows.len() as f64 };
        Self { metric: metric.into(), unit: unit.into(), tag: tag.into(), windows, mean, missing }
    }

    pub fn scalar(metric: &str, unit: &str, tag: &str, value: f64) -> Self {
        Self::new(metric, unit, tag, vec![value], 0)
    }
}

/// Fixed-precision rendering keeps the files byte-stable across platforms.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.9}")
    }
}

pub fn write_metrics_csv<W: Write>(mut w: W, reports: &[MetricReport]) -> io::Result<()> {
    writeln!(w, "metric,tag,unit,windows,missing,mean")?;
    for r in reports {
        writeln!(w, "{},{},{},{},{},{}", r.metric, r.tag, r.unit, r.windows.len(), r.missing, format_value(r.mean))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_is_arithmetic() {
        let r = MetricReport::new("chamfer", "cm", "gt", vec![1.0, 2.0, 4.5], 1);
        assert_eq!(r.mean, 2.5);
        assert!(MetricReport::new("x", "m", "t", vec![], 3).mean.is_nan());
    }

    #[test]
    fn empty_report_survives_json() {
        let r = MetricReport::new("x", "m", "t", vec![], 3);
        let back: MetricReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert!(back.mean.is_nan());
        assert_eq!(back.missing, 3);
    }

    #[test]
    fn csv_and_json() {
        let reports = vec![MetricReport::scalar("rte", "m", "ekf-vio", 0.0529)];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &reports).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "metric,tag,unit,windows,missing,mean\nrte,ekf-vio,m,1,0,0.052900000\n");
        let json = serde_json::to_string(&reports).unwrap();
        let back: Vec<MetricReport> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, reports);
    }
}
