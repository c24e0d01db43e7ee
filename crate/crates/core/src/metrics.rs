//! Figures of merit: success probability, mean absolute peak error and the
//! success-normalized error `delta_nu / sqrt(P)`.

use crate::error::{invalid, Result};
use crate::peaks::PeakList;
use crate::protocols::TrialOutcome;
use crate::scalar::Real;
use crate::spectrum::ResonanceSet;

/// Absolute center errors under sorted pairing; `None` unless the counts agree.
pub fn match_peaks<T: Real>(estimated: &PeakList<T>, truth: &ResonanceSet<T>) -> Option<Vec<T>> {
    if truth.is_empty() || estimated.found_count() != truth.len() {
        return None;
    }
    Some(
        estimated
            .centers()
            .iter()
            .zip(truth.centers())
            .map(|(&e, &t)| (e - t).abs())
            .collect(),
    )
}

/// Mean of a list of absolute errors.
pub fn mean_abs_error<T: Real>(errors: &[T]) -> T {
    errors.iter().copied().sum::<T>() / T::from_usize_lossy(errors.len())
}

/// `delta_nu / sqrt(P)`; undefined when nothing succeeded.
pub fn normalized_error<T: Real>(delta_nu: T, success_probability: T) -> Option<T> {
    if success_probability > T::zero() {
        Some(delta_nu / success_probability.sqrt())
    } else {
        None
    }
}

/// `eta = delta_nu / gamma * sqrt(T)` in Gauss times square-root time units.
pub fn sensitivity<T: Real>(delta_nu: T, gyromagnetic_ratio: T, total_time: T) -> T {
    delta_nu / gyromagnetic_ratio * total_time.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary<T> {
    pub n_trials: usize,
    pub successes: usize,
    pub success_probability: T,
    pub mean_delta_nu: Option<T>,
    pub std_delta_nu: Option<T>,
    pub normalized_error: Option<T>,
    pub sensitivity_eta: Option<T>,
}

/// Sum in ascending order so the result does not depend on input order.
fn ordered_sum<T: Real>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    values.iter().copied().sum()
}

/// Aggregates trials. Error statistics use successful trials only; failures
/// enter through `P = successes / n_trials`.
pub fn summarize<T: Real>(outcomes: &[TrialOutcome<T>], gyromagnetic_ratio: T) -> Result<MetricsSummary<T>> {
    if outcomes.is_empty() {
        return Err(invalid("cannot summarize zero trials"));
    }
    let n_trials = outcomes.len();
    let successes = outcomes.iter().filter(|o| o.success).count();
    let success_probability = T::from_usize_lossy(successes) / T::from_usize_lossy(n_trials);

    let mut deltas: Vec<T> = outcomes
        .iter()
        .filter(|o| o.success)
        .filter_map(|o| o.delta_nu)
        .collect();
    if deltas.is_empty() {
        return Ok(MetricsSummary {
            n_trials,
            successes,
            success_probability,
            mean_delta_nu: None,
            std_delta_nu: None,
            normalized_error: None,
            sensitivity_eta: None,
        });
    }
    let k = T::from_usize_lossy(deltas.len());
    let mean = ordered_sum(&mut deltas) / k;
    let std = if deltas.len() > 1 {
        let mut sq: Vec<T> = deltas.iter().map(|&d| (d - mean) * (d - mean)).collect();
        (ordered_sum(&mut sq) / (k - T::one())).sqrt()
    } else {
        T::zero()
    };
    let mut times: Vec<T> = outcomes
        .iter()
        .filter(|o| o.success && o.delta_nu.is_some())
        .map(|o| T::from_usize_lossy(o.measurements_used))
        .collect();
    let mean_time = ordered_sum(&mut times) / k;
    Ok(MetricsSummary {
        n_trials,
        successes,
        success_probability,
        mean_delta_nu: Some(mean),
        std_delta_nu: Some(std),
        normalized_error: normalized_error(mean, success_probability),
        sensitivity_eta: Some(sensitivity(mean, gyromagnetic_ratio, mean_time)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::Termination;

    fn truth() -> ResonanceSet<f64> {
        let c: Vec<f64> = (0..8).map(|i| 2600.0 + 70.0 * i as f64).collect();
        ResonanceSet::new(c, vec![10.0; 8], vec![1.0; 8]).unwrap()
    }

    fn outcome(delta: Option<f64>, used: usize) -> TrialOutcome<f64> {
        let t = truth();
        let peaks = match delta {
            Some(d) => {
                let mut c = t.centers().to_vec();
                c[0] += 8.0 * d;
                PeakList::new(c, vec![10.0; 8]).unwrap()
            }
            None => PeakList::empty(),
        };
        TrialOutcome::score(peaks, used, Termination::MaxMeasurements, 8, Some(&t))
    }

    #[test]
    fn identical_lists_have_zero_error() {
        let t = truth();
        let est = PeakList::new(t.centers().to_vec(), t.widths().to_vec()).unwrap();
        assert!(match_peaks(&est, &t).unwrap().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn one_shifted_peak() {
        let t = truth();
        let mut c = t.centers().to_vec();
        c[3] += 1.0;
        let est = PeakList::new(c, vec![10.0; 8]).unwrap();
        let e = match_peaks(&est, &t).unwrap();
        assert_eq!(e.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(mean_abs_error(&e), 0.125);
    }

    #[test]
    fn too_few_estimates_have_no_error_vector() {
        let t = truth();
        let est = PeakList::new(t.centers()[..7].to_vec(), vec![10.0; 7]).unwrap();
        assert!(match_peaks(&est, &t).is_none());
    }

    #[test]
    fn normalized_error_identities() {
        assert_eq!(normalized_error(0.5, 1.0), Some(0.5));
        assert_eq!(normalized_error(0.5, 0.25), Some(1.0));
        assert_eq!(normalized_error(0.5, 0.0), None);
    }

    #[test]
    fn summary_of_mixed_trials() {
        let outs = vec![outcome(Some(0.5), 100), outcome(None, 100), outcome(Some(0.5), 100), outcome(None, 100)];
        let s = summarize(&outs, 2.87).unwrap();
        assert_eq!(s.success_probability, 0.5);
        assert!((s.mean_delta_nu.unwrap() - 0.5).abs() < 1e-12);
        assert!((s.normalized_error.unwrap() - 0.5 / 0.5f64.sqrt()).abs() < 1e-12);
        assert!((s.sensitivity_eta.unwrap() - 0.5 / 2.87 * 10.0).abs() < 1e-9);
        assert!(s.normalized_error.unwrap() >= s.mean_delta_nu.unwrap());
    }

    #[test]
    fn all_failures_leave_errors_absent() {
        let s = summarize(&[outcome(None, 10), outcome(None, 10)], 2.87).unwrap();
        assert_eq!(s.success_probability, 0.0);
        assert!(s.mean_delta_nu.is_none() && s.normalized_error.is_none());
        assert!(summarize::<f64>(&[], 2.87).is_err());
    }
}
