//! Plot-ready result tables as CSV or JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::MethodName;
use crate::error::{HarnessError, Result};
use crate::scenario::ScenarioResult;

/// One (axis value, method, point count) summary. Column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub axis_value: f64,
    pub method: MethodName,
    pub n_points: usize,
    #[serde(rename = "P")]
    pub p: f64,
    pub mean_delta_nu: Option<f64>,
    pub std_delta_nu: Option<f64>,
    pub normalized_error: Option<f64>,
    pub n_trials: usize,
    pub seed: u64,
}

impl ResultRow {
    /// Normalized error with "nothing succeeded" ranked worst.
    pub fn normalized_error_or_inf(&self) -> f64 {
        self.normalized_error.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(HarnessError::Config(format!("unknown format {other:?} (csv or json)"))),
        }
    }
}

/// Rows of one scenario; `axis_value` is the swept value, or the point count
/// when nothing is swept.
pub fn scenario_rows(result: &ScenarioResult, axis_value: Option<f64>, seed: u64) -> Vec<ResultRow> {
    result
        .summaries
        .iter()
        .map(|m| ResultRow {
            axis_value: axis_value.unwrap_or(m.n_points as f64),
            method: m.method,
            n_points: m.n_points,
            p: m.summary.success_probability,
            mean_delta_nu: m.summary.mean_delta_nu,
            std_delta_nu: m.summary.std_delta_nu,
            normalized_error: m.summary.normalized_error,
            n_trials: m.summary.n_trials,
            seed,
        })
        .collect()
}

fn nonempty(rows: &[ResultRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(HarnessError::Config("refusing to export an empty table".into()));
    }
    Ok(())
}

pub fn to_csv(rows: &[ResultRow]) -> Result<String> {
    nonempty(rows)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| format_error(Path::new("<memory>"), e))?;
    }
    let bytes = w.into_inner().map_err(|e| format_error(Path::new("<memory>"), e))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn from_csv(text: &str) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(|e| format_error(Path::new("<memory>"), e))
}

/// JSON document: the resolved config next to the rows.
pub fn to_json<C: Serialize>(rows: &[ResultRow], config: &C, errors: &[String]) -> Result<String> {
    nonempty(rows)?;
    #[derive(Serialize)]
    struct Document<'a, C> {
        config: &'a C,
        rows: &'a [ResultRow],
        #[serde(skip_serializing_if = "<[String]>::is_empty")]
        errors: &'a [String],
    }
    serde_json::to_string_pretty(&Document { config, rows, errors })
        .map_err(|e| format_error(Path::new("<memory>"), e))
}

fn format_error(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `rows` to `path`; JSON also embeds `config`.
pub fn export_results<C: Serialize>(
    rows: &[ResultRow],
    config: &C,
    errors: &[String],
    path: &Path,
    format: Format,
) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(rows)?,
        Format::Json => to_json(rows, config, errors)?,
    };
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ResultRow> {
        vec![
            ResultRow {
                axis_value: 3.0,
                method: MethodName::Cs,
                n_points: 217,
                p: 0.9649122807017544,
                mean_delta_nu: Some(0.1 + 0.2),
                std_delta_nu: Some(1.0 / 3.0),
                normalized_error: Some(std::f64::consts::PI),
                n_trials: 57,
                seed: u64::MAX,
            },
            ResultRow {
                axis_value: 1e-300,
                method: MethodName::Raster,
                n_points: 50,
                p: 0.0,
                mean_delta_nu: None,
                std_delta_nu: None,
                normalized_error: None,
                n_trials: 57,
                seed: 0,
            },
        ]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let text = to_csv(&rows()).unwrap();
        assert!(text.starts_with(
            "axis_value,method,n_points,P,mean_delta_nu,std_delta_nu,normalized_error,n_trials,seed\n"
        ));
        assert_eq!(from_csv(&text).unwrap(), rows());
    }

    #[test]
    fn json_carries_config_and_rows() {
        let text = to_json(&rows(), &serde_json::json!({"snr": 3.0}), &[]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["config"]["snr"], 3.0);
        let back: Vec<ResultRow> = serde_json::from_value(v["rows"].clone()).unwrap();
        assert_eq!(back, rows());
    }

    #[test]
    fn empty_table_is_rejected() {
        assert!(to_csv(&[]).is_err());
        assert!(to_json(&[], &(), &[]).is_err());
    }

    #[test]
    fn io_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("out.csv");
        let err = export_results(&rows(), &(), &[], &path, Format::Csv).unwrap_err();
        assert!(err.to_string().contains("out.csv"));
        let ok = dir.path().join("out.csv");
        export_results(&rows(), &(), &[], &ok, Format::Csv).unwrap();
        assert_eq!(from_csv(&std::fs::read_to_string(ok).unwrap()).unwrap(), rows());
    }
}
