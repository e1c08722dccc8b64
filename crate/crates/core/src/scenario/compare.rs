use std::fmt::Write as _;

use crate::eval::{format_value, MetricReport};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: String,
    pub unit: String,
    /// Mean per input, `None` where the input lacks the metric.
    pub values: Vec<Option<f64>>,
    /// Percent change of each input relative to the first.
    pub deltas: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub labels: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

fn percent_delta(base: f64, other: f64) -> Option<f64> {
    if base == other {
        Some(0.0)
    } else if base == 0.0 || !base.is_finite() || !other.is_finite() {
        None
    } else {
        Some(100.0 * (other - base) / base)
    }
}

/// Lines up reports by metric name. The first input is the baseline; rows
/// cover the union of metrics in order of first appearance.
pub fn compare_reports(inputs: &[(String, Vec<MetricReport>)]) -> ComparisonTable {
    let mut names: Vec<(String, String)> = Vec::new();
    for (_, reports) in inputs {
        for r in reports {
            if !names.iter().any(|(n, _)| *n == r.metric) {
                names.push((r.metric.clone(), r.unit.clone()));
            }
        }
    }
    let rows = names
        .into_iter()
        .map(|(metric, unit)| {
            let values: Vec<Option<f64>> = inputs
                .iter()
                .map(|(_, reports)| reports.iter().find(|r| r.metric == metric).map(|r| r.mean))
                .collect();
            let deltas = values
                .iter()
                .map(|v| match (values[0], v) {
                    (Some(b), Some(o)) => percent_delta(b, *o),
                    _ => None,
                })
                .collect();
            ComparisonRow { metric, unit, values, deltas }
        })
        .collect();
    ComparisonTable { labels: inputs.iter().map(|(l, _)| l.clone()).collect(), rows }
}

impl ComparisonTable {
    /// Plain-text table; `-` marks a missing metric, `n/a` an undefined delta.
    pub fn render(&self) -> String {
        let mut header = vec!["metric".to_string(), "unit".to_string()];
        for (i, l) in self.labels.iter().enumerate() {
            header.push(l.clone());
            if i > 0 {
                header.push(format!("delta[{i}]"));
            }
        }
        let mut lines = vec![header];
        for row in &self.rows {
            let mut cells = vec![row.metric.clone(), row.unit.clone()];
            for (i, v) in row.values.iter().enumerate() {
                cells.push(v.map_or("-".into(), format_value));
                if i > 0 {
                    cells.push(if v.is_none() || row.values[0].is_none() {
                        "-".into()
                    } else {
                        row.deltas[i].map_or("n/a".into(), |d| format!("{d:+.2}%"))
                    });
                }
            }
            lines.push(cells);
        }
        let widths: Vec<usize> =
            (0..lines[0].len()).map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}
