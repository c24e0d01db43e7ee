//! Measurement seam between the protocols and whatever produces counts.
//!
//! Only a simulated backend ships here; a hardware driver would implement
//! [`MeasurementBackend`] the same way.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dictionary::{draw_projection, MAX_TONES};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::spectrum::{gaussian, noise_sigma_for_snr, FrequencyWindow, ResonanceSet};

/// One measurement event: tones applied, fluorescence count, optional paired reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRecord<T> {
    /// Indices of the applied tones on the measurement grid.
    pub tone_indices: Vec<usize>,
    /// MHz
    pub applied_frequencies: Vec<T>,
    pub signal_count: T,
    /// Count of the no-microwave measurement taken with this projection, if any.
    pub reference_count: Option<T>,
    pub sequence_index: usize,
}

impl<T: Real> ProjectionRecord<T> {
    pub fn new(
        tone_indices: Vec<usize>,
        applied_frequencies: Vec<T>,
        signal_count: T,
        reference_count: Option<T>,
        sequence_index: usize,
    ) -> Self {
        Self {
            tone_indices,
            applied_frequencies,
            signal_count,
            reference_count,
            sequence_index,
        }
    }
}

/// Anything that can return fluorescence counts for a set of microwave tones.
pub trait MeasurementBackend<T: Real> {
    fn window(&self) -> FrequencyWindow<T>;

    /// Count with all `frequencies` applied simultaneously.
    fn measure(&mut self, frequencies: &[T]) -> Result<T>;

    /// Count with no microwave applied.
    fn measure_reference(&mut self) -> Result<T>;
}

/// Simulated ensemble: `P_r - sum_tones sum_k L a_k + N(0, sigma^2)` per measurement.
#[derive(Debug, Clone)]
pub struct SimulatedBackend<T> {
    truth: ResonanceSet<T>,
    window: FrequencyWindow<T>,
    reference_power: T,
    noise_sigma: T,
    rng: ChaCha8Rng,
    measurements: u64,
}

impl<T: Real> SimulatedBackend<T> {
    pub fn new(
        truth: ResonanceSet<T>,
        window: FrequencyWindow<T>,
        reference_power: T,
        noise_sigma: T,
        seed: u64,
    ) -> Result<Self> {
        if !(noise_sigma >= T::zero()) || !noise_sigma.is_finite() {
            return Err(invalid("noise sigma must be finite and nonnegative"));
        }
        for &c in truth.centers() {
            window.check(c)?;
        }
        Ok(Self {
            truth,
            window,
            reference_power,
            noise_sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
            measurements: 0,
        })
    }

    /// Noise level from `snr` with the same definition as the synthetic spectra:
    /// deepest clean dip on `grid` divided by `snr`.
    pub fn with_snr(
        truth: ResonanceSet<T>,
        window: FrequencyWindow<T>,
        grid: &[T],
        reference_power: T,
        snr: T,
        seed: u64,
    ) -> Result<Self> {
        let sigma = noise_sigma_for_snr(truth.max_dip(grid), snr)?;
        Self::new(truth, window, reference_power, sigma, seed)
    }

    pub fn truth(&self) -> &ResonanceSet<T> {
        &self.truth
    }

    pub fn noise_sigma(&self) -> T {
        self.noise_sigma
    }

    pub fn reference_power(&self) -> T {
        self.reference_power
    }

    /// Number of counts returned so far (signal and reference).
    pub fn measurements(&self) -> u64 {
        self.measurements
    }

    /// Noise-free count for `frequencies`.
    pub fn expected_count(&self, frequencies: &[T]) -> T {
        self.reference_power - frequencies.iter().map(|&nu| self.truth.dip_at(nu)).sum::<T>()
    }

    fn noise(&mut self) -> T {
        self.measurements += 1;
        let z: T = gaussian(&mut self.rng);
        if self.noise_sigma == T::zero() {
            T::zero()
        } else {
            self.noise_sigma * z
        }
    }
}

impl<T: Real> MeasurementBackend<T> for SimulatedBackend<T> {
    fn window(&self) -> FrequencyWindow<T> {
        self.window
    }

    fn measure(&mut self, frequencies: &[T]) -> Result<T> {
        if frequencies.is_empty() || frequencies.len() > MAX_TONES {
            return Err(invalid(format!("a projection applies 1..={MAX_TONES} tones")));
        }
        for &nu in frequencies {
            self.window.check(nu)?;
        }
        Ok(self.expected_count(frequencies) + self.noise())
    }

    fn measure_reference(&mut self) -> Result<T> {
        Ok(self.reference_power + self.noise())
    }
}

/// Measures the tones at `indices` of `grid`, with a paired reference when `with_reference`.
pub fn measure_projection<T: Real, B: MeasurementBackend<T> + ?Sized>(
    backend: &mut B,
    grid: &[T],
    indices: Vec<usize>,
    sequence_index: usize,
    with_reference: bool,
) -> Result<ProjectionRecord<T>> {
    let freqs = indices
        .iter()
        .map(|&j| {
            grid.get(j).copied().ok_or(Error::DimensionMismatch {
                context: "tone index",
                expected: grid.len(),
                actual: j,
            })
        })
        .collect::<Result<Vec<T>>>()?;
    let signal = backend.measure(&freqs)?;
    let reference = if with_reference {
        Some(backend.measure_reference()?)
    } else {
        None
    };
    Ok(ProjectionRecord::new(indices, freqs, signal, reference, sequence_index))
}

/// Output of the initial random-projection phase.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPhase<T> {
    pub records: Vec<ProjectionRecord<T>>,
    /// Mean reference count.
    pub mean_reference: T,
    /// Sample standard deviation of the reference counts.
    pub noise_sigma_estimate: T,
}

/// Sample mean and (n-1)-normalized standard deviation.
pub fn mean_and_std<T: Real>(values: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    if values.len() < 2 {
        return (mean, T::zero());
    }
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one());
    (mean, var.sqrt())
}

/// Measures `n_initial` random projections, each with its reference, and
/// estimates the reference level and the count noise from the references.
pub fn run_initial_phase<T: Real, B: MeasurementBackend<T> + ?Sized, R: Rng + ?Sized>(
    backend: &mut B,
    grid: &[T],
    n_initial: usize,
    tones: usize,
    rng: &mut R,
) -> Result<InitialPhase<T>> {
    if n_initial < 4 {
        return Err(invalid("the initial phase needs at least 4 projections"));
    }
    let none = BTreeSet::new();
    let mut records = Vec::with_capacity(n_initial);
    for seq in 0..n_initial {
        let indices = draw_projection(rng, grid.len(), tones, &none)?;
        records.push(measure_projection(backend, grid, indices, seq, true)?);
    }
    let refs: Vec<T> = records.iter().filter_map(|r| r.reference_count).collect();
    let (mean_reference, noise_sigma_estimate) = mean_and_std(&refs);
    Ok(InitialPhase {
        records,
        mean_reference,
        noise_sigma_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{lorentzian, FrequencyWindow};

    fn truth() -> ResonanceSet<f64> {
        ResonanceSet::new(vec![2800.0, 2950.0], vec![10.0, 10.0], vec![300.0, 200.0]).unwrap()
    }

    fn window() -> FrequencyWindow<f64> {
        FrequencyWindow::centered(2870.0, 400.0).unwrap()
    }

    #[test]
    fn tone_on_center_gives_expected_dip() {
        let b = SimulatedBackend::new(truth(), window(), 1000.0, 0.0, 1).unwrap();
        let single = 1000.0 - b.expected_count(&[2800.0]);
        let other = lorentzian(2800.0, 2950.0, 10.0) * 200.0;
        assert!((single - (300.0 * 2.0 / (std::f64::consts::PI * 10.0) + other)).abs() < 1e-9);
        let both = 1000.0 - b.expected_count(&[2800.0, 2950.0]);
        let second = 1000.0 - b.expected_count(&[2950.0]);
        assert!((both - (single + second)).abs() < 1e-9);
    }

    #[test]
    fn rejects_out_of_window_and_bad_tone_counts() {
        let mut b = SimulatedBackend::new(truth(), window(), 1000.0, 1.0, 1).unwrap();
        assert!(matches!(b.measure(&[3100.0]), Err(Error::OutOfWindow { .. })));
        assert!(b.measure(&[]).is_err());
        assert!(b.measure(&[2800.0; 5]).is_err());
    }

    #[test]
    fn noiseless_initial_phase() {
        let mut b = SimulatedBackend::new(truth(), window(), 1000.0, 0.0, 1).unwrap();
        let grid = window().grid(401);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phase = run_initial_phase(&mut b, &grid, 6, 3, &mut rng).unwrap();
        assert_eq!(phase.mean_reference, 1000.0);
        assert_eq!(phase.noise_sigma_estimate, 0.0);
        let seq: Vec<usize> = phase.records.iter().map(|r| r.sequence_index).collect();
        assert_eq!(seq, (0..6).collect::<Vec<_>>());
        assert!(run_initial_phase(&mut b, &grid, 3, 3, &mut rng).is_err());
    }

    #[test]
    fn truth_is_not_mutated() {
        let mut b = SimulatedBackend::new(truth(), window(), 1000.0, 5.0, 4).unwrap();
        let before = b.truth().clone();
        for i in 0..100 {
            let nu = 2700.0 + i as f64;
            b.measure(&[nu]).unwrap();
            b.measure_reference().unwrap();
        }
        assert_eq!(b.truth(), &before);
        assert_eq!(b.measurements(), 200);
    }
}
