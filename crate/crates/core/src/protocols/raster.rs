//! Raster-scan baseline: single-tone counts on a uniform sub-grid, then a
//! Lorentzian fit.

use crate::acquisition::MeasurementBackend;
use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::spectrum::ResonanceSet;

use super::fit::{fit_lorentzians, FitOptions};
use super::{Termination, TrialOutcome};

/// Indices `round(i (m - 1) / (n - 1))` for `i = 0..n`: a uniform sub-sample
/// of an `m`-point grid that keeps both endpoints.
pub fn raster_indices(m: usize, n: usize) -> Result<Vec<usize>> {
    if n < 2 || n > m {
        return Err(invalid(format!("raster needs 2 <= n_points <= {m}, got {n}")));
    }
    Ok((0..n)
        .map(|i| ((i * (m - 1)) as f64 / (n - 1) as f64).round() as usize)
        .collect())
}

/// Counts measured once on the full grid; sub-sampled scans reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterScan<T> {
    pub grid: Vec<T>,
    pub counts: Vec<T>,
}

impl<T: Real> RasterScan<T> {
    /// Measures every grid point with a single tone, in ascending order.
    pub fn measure<B: MeasurementBackend<T> + ?Sized>(backend: &mut B, grid: &[T]) -> Result<Self> {
        let counts = grid
            .iter()
            .map(|&nu| backend.measure(&[nu]))
            .collect::<Result<Vec<T>>>()?;
        Ok(Self {
            grid: grid.to_vec(),
            counts,
        })
    }

    /// Fits the `n_points` sub-sample and scores it.
    pub fn outcome(
        &self,
        n_points: usize,
        n_peaks: usize,
        options: &FitOptions<T>,
        truth: Option<&ResonanceSet<T>>,
    ) -> Result<TrialOutcome<T>> {
        if n_points < n_peaks {
            return Err(invalid(format!("raster needs at least {n_peaks} points")));
        }
        let idx = raster_indices(self.grid.len(), n_points)?;
        let grid: Vec<T> = idx.iter().map(|&i| self.grid[i]).collect();
        let counts: Vec<T> = idx.iter().map(|&i| self.counts[i]).collect();
        Ok(match fit_lorentzians(&grid, &counts, n_peaks, None, options) {
            Ok(fit) => TrialOutcome::score(fit.peaks, n_points, Termination::MaxMeasurements, n_peaks, truth),
            Err(_) => TrialOutcome::failure(n_points, Termination::MaxMeasurements),
        })
    }
}

/// Measures `n_points` evenly spaced points of `grid` and fits `n_peaks` dips.
pub fn run_raster_trial<T: Real, B: MeasurementBackend<T> + ?Sized>(
    backend: &mut B,
    grid: &[T],
    n_points: usize,
    n_peaks: usize,
    options: &FitOptions<T>,
    truth: Option<&ResonanceSet<T>>,
) -> Result<TrialOutcome<T>> {
    if n_points < n_peaks || n_points > grid.len() {
        return Err(invalid(format!(
            "raster needs {n_peaks} <= n_points <= {}, got {n_points}",
            grid.len()
        )));
    }
    let idx = raster_indices(grid.len(), n_points)?;
    let sub: Vec<T> = idx.iter().map(|&i| grid[i]).collect();
    let scan = RasterScan::measure(backend, &sub)?;
    scan.outcome(n_points, n_peaks, options, truth)
}
