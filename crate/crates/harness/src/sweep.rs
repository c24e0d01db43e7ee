//! One axis of the scenario varied at a time.

use log::warn;

use crate::config::{Axis, SweepSpec};
use crate::error::Result;
use crate::export::{scenario_rows, ResultRow};
use crate::scenario::run_scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    /// One message per axis value whose scenario failed.
    pub errors: Vec<String>,
}

/// Runs the sweep. A failing axis value is recorded as empty rows
/// (`n_trials = 0`) plus a message, and the sweep carries on.
pub fn run_sweep(spec: &SweepSpec, parallel: bool) -> Result<SweepResult> {
    spec.validate()?;
    let seed = spec.base.seed;
    if spec.axis == Axis::NPoints {
        // Counts are nested prefixes of the same trials: one scenario covers them all.
        let mut s = spec.base.clone();
        let mut counts: Vec<usize> = spec.values.iter().map(|&v| v as usize).collect();
        counts.sort_unstable();
        s.point_counts = counts;
        let result = run_scenario(&s, parallel)?;
        return Ok(SweepResult {
            rows: scenario_rows(&result, None, seed),
            errors: Vec::new(),
        });
    }
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for &value in &spec.values {
        let scenario = spec.scenario_at(value);
        match run_scenario(&scenario, parallel) {
            Ok(result) => rows.extend(scenario_rows(&result, Some(value), seed)),
            Err(e) => {
                let msg = format!("{} = {value}: {e}", spec.axis.name());
                warn!("{msg}");
                errors.push(msg);
                for method in scenario.method.names() {
                    for &n in &scenario.point_counts {
                        rows.push(ResultRow {
                            axis_value: value,
                            method,
                            n_points: n,
                            p: 0.0,
                            mean_delta_nu: None,
                            std_delta_nu: None,
                            normalized_error: None,
                            n_trials: 0,
                            seed,
                        });
                    }
                }
            }
        }
    }
    Ok(SweepResult { rows, errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{sweep_preset, Method, MethodName};

    #[test]
    fn one_row_per_value_and_method() {
        let mut spec = sweep_preset("tones-sweep").unwrap();
        spec.values = vec![2.0, 4.0];
        spec.base.n_samples = 1;
        spec.base.point_counts = vec![40];
        spec.base.snr = f64::INFINITY;
        let r = run_sweep(&spec, false).unwrap();
        assert!(r.errors.is_empty());
        let keys: Vec<(f64, MethodName)> = r.rows.iter().map(|x| (x.axis_value, x.method)).collect();
        assert_eq!(
            keys,
            vec![
                (2.0, MethodName::Cs),
                (2.0, MethodName::Raster),
                (4.0, MethodName::Cs),
                (4.0, MethodName::Raster)
            ]
        );
    }

    #[test]
    fn point_count_sweep_uses_nested_counts() {
        let mut spec = sweep_preset("snr-sweep").unwrap();
        spec.axis = Axis::NPoints;
        spec.values = vec![30.0, 20.0];
        spec.base.n_samples = 1;
        spec.base.method = Method::Raster;
        let r = run_sweep(&spec, false).unwrap();
        let counts: Vec<usize> = r.rows.iter().map(|x| x.n_points).collect();
        assert_eq!(counts, vec![20, 30]);
        assert!(r.rows.iter().all(|x| x.axis_value == x.n_points as f64));
    }
}
