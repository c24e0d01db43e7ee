//! Acquisition strategies: the adaptive compressed-sensing loop and the raster
//! scan with Lorentzian fitting. Both turn a [`MeasurementBackend`] into a
//! [`TrialOutcome`].
//!
//! [`MeasurementBackend`]: crate::acquisition::MeasurementBackend

pub mod convergence;
pub mod cs;
pub mod detect;
pub mod fit;
pub mod raster;

pub use convergence::ConvergenceState;
pub use cs::{run_cs_trial, CenterEstimator, CsConfig, CsTrial, LambdaRule, Snapshot};
pub use detect::{detect_clusters, detect_peaks, Cluster};
pub use fit::{fit_lorentzians, fit_observations, FitFailure, FitOptions, FitStart, LorentzianFit, Observation};
pub use raster::{raster_indices, run_raster_trial, RasterScan};

use crate::metrics::{match_peaks, mean_abs_error};
use crate::peaks::PeakList;
use crate::scalar::Real;
use crate::spectrum::ResonanceSet;

/// Why a trial stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxMeasurements,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome<T> {
    /// All expected peaks were retrieved.
    pub success: bool,
    pub estimated_peaks: PeakList<T>,
    /// Projections (CS) or frequency points (raster) measured.
    pub measurements_used: usize,
    /// Sorted-pairing errors in MHz, when ground truth is known and the counts agree.
    pub per_peak_abs_error: Option<Vec<T>>,
    /// Mean of `per_peak_abs_error`, MHz.
    pub delta_nu: Option<T>,
    pub terminated_by: Termination,
}

impl<T: Real> TrialOutcome<T> {
    /// Scores an estimate; success means exactly `expected_peaks` peaks were found.
    pub fn score(
        estimated_peaks: PeakList<T>,
        measurements_used: usize,
        terminated_by: Termination,
        expected_peaks: usize,
        truth: Option<&ResonanceSet<T>>,
    ) -> Self {
        let success = estimated_peaks.found_count() == expected_peaks;
        let per_peak_abs_error = if success {
            truth.and_then(|t| match_peaks(&estimated_peaks, t))
        } else {
            None
        };
        let delta_nu = per_peak_abs_error.as_deref().map(mean_abs_error);
        Self {
            success,
            estimated_peaks,
            measurements_used,
            per_peak_abs_error,
            delta_nu,
            terminated_by,
        }
    }

    /// A failed trial with nothing to report.
    pub fn failure(measurements_used: usize, terminated_by: Termination) -> Self {
        Self {
            success: false,
            estimated_peaks: PeakList::empty(),
            measurements_used,
            per_peak_abs_error: None,
            delta_nu: None,
            terminated_by,
        }
    }
}
