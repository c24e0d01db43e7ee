//! Stopping rule of the CS loop: a run of consecutive reconstructions that
//! all find the expected peak count at mutually consistent positions.

use crate::peaks::PeakList;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceState<T> {
    history: Vec<PeakList<T>>,
    consecutive_hits: usize,
    tolerance: T,
    required_consecutive: usize,
    expected_peaks: usize,
}

impl<T: Real> ConvergenceState<T> {
    pub fn new(tolerance: T, required_consecutive: usize, expected_peaks: usize) -> Self {
        Self {
            history: Vec::with_capacity(required_consecutive),
            consecutive_hits: 0,
            tolerance,
            required_consecutive: required_consecutive.max(1),
            expected_peaks,
        }
    }

    /// Feeds one reconstruction's peaks; returns whether the run is complete.
    ///
    /// A list with the wrong count clears the run. A list that deviates by more
    /// than the tolerance from any list in the run starts a new run of one.
    pub fn update(&mut self, peaks: &PeakList<T>) -> bool {
        if peaks.found_count() != self.expected_peaks {
            self.reset();
            return false;
        }
        let agrees = self
            .history
            .iter()
            .all(|h| h.max_deviation(peaks).is_some_and(|d| d <= self.tolerance));
        if !agrees {
            self.history.clear();
            self.consecutive_hits = 0;
        }
        if self.history.len() == self.required_consecutive {
            self.history.remove(0);
        }
        self.history.push(peaks.clone());
        self.consecutive_hits = (self.consecutive_hits + 1).min(self.required_consecutive);
        self.is_converged()
    }

    pub fn reset(&mut self) {
        self.history.clear();
        self.consecutive_hits = 0;
    }

    pub fn is_converged(&self) -> bool {
        self.consecutive_hits >= self.required_consecutive
    }

    pub fn consecutive_hits(&self) -> usize {
        self.consecutive_hits
    }

    pub fn history(&self) -> &[PeakList<T>] {
        &self.history
    }

    pub fn tolerance(&self) -> T {
        self.tolerance
    }

    pub fn required_consecutive(&self) -> usize {
        self.required_consecutive
    }
}
