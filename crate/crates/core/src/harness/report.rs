//! Report structures, error normalization, and file emission.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method};
use crate::harness::svg::{self, Series};

/// One (size, method, run) measurement. A failed backend call leaves the
/// cell present but incomplete, with the failure recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    pub size: usize,
    pub method: Method,
    pub run: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Cell {
    pub fn complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// Per-(size, method) aggregate over complete runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub size: usize,
    pub method: Method,
    pub complete_runs: usize,
    pub mean_utility: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility_proximity: Option<f64>,
    pub mean_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_error: Option<f64>,
    /// How close the method's error sits to the optimum bound (1) versus
    /// the random bound (0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_proximity: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    pub config: ExperimentConfig,
    pub cells: Vec<Cell>,
    pub aggregates: Vec<Aggregate>,
    pub flags: Vec<String>,
}

/// Min-max normalize a group of error values onto [0, 1]. A constant group
/// maps to all zeros and reports `degenerate = true`.
pub fn normalize_errors(values: &[f64]) -> (Vec<f64>, bool) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return (vec![0.0; values.len()], true);
    }
    (values.iter().map(|v| (v - lo) / span).collect(), false)
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Aggregate grid as CSV. The mandated columns come first, the sweep size
/// is appended last.
pub fn tables_csv(report: &Report) -> String {
    let mut out =
        String::from("method,mean_utility,utility_proximity,mean_error,normalized_error,size\n");
    for a in &report.aggregates {
        out.push_str(&format!(
            "{},{:.6},{},{:.6},{},{}\n",
            a.method.label(),
            a.mean_utility,
            csv_opt(a.utility_proximity),
            a.mean_error,
            csv_opt(a.normalized_error),
            a.size
        ));
    }
    out
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Write `report.json`, `tables.csv`, and the SVG plots into `out_dir`.
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    write(&out_dir.join("report.json"), &(json + "\n"))?;
    write(&out_dir.join("tables.csv"), &tables_csv(report))?;

    // Mean error per method across input sizes.
    let mut error_series = Vec::new();
    for method in &report.config.methods {
        let points: Vec<(f64, f64)> = report
            .aggregates
            .iter()
            .filter(|a| a.method == *method)
            .map(|a| (a.size as f64, a.mean_error))
            .collect();
        if !points.is_empty() {
            error_series.push(Series {
                label: method.label().to_string(),
                points,
            });
        }
    }
    write(
        &out_dir.join("error_vs_size.svg"),
        &svg::line_chart("mean error vs input size", "input size", "mean error", &error_series),
    )?;

    // The rerank profile over token positions, at the largest size used.
    if let Some(&size) = report.config.task.sizes().iter().max() {
        let token_len = size.max(2);
        if let Ok(profile) =
            crate::harness::config::resolve_profile(&report.config.rerank.exposure_profile, token_len)
        {
            let points: Vec<(f64, f64)> = profile
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| ((i + 1) as f64, v))
                .collect();
            write(
                &out_dir.join("exposure_profile.svg"),
                &svg::line_chart(
                    "rerank exposure profile",
                    "token position",
                    "exposure",
                    &[Series {
                        label: report.config.rerank.exposure_profile.clone(),
                        points,
                    }],
                ),
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_spans_the_unit_interval() {
        let (v, flag) = normalize_errors(&[2.0, 6.0, 10.0]);
        assert_eq!(v, vec![0.0, 0.5, 1.0]);
        assert!(!flag);
    }

    #[test]
    fn maximum_maps_to_one() {
        let (v, _) = normalize_errors(&[4.0, 9.0, 1.0]);
        assert_eq!(v[1], 1.0);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn constant_group_flags_degeneracy() {
        let (v, flag) = normalize_errors(&[3.0, 3.0]);
        assert_eq!(v, vec![0.0, 0.0]);
        assert!(flag);
    }
}
