use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Estimated resonance positions and FWHM widths, sorted by center.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakList<T> {
    centers: Vec<T>,
    widths: Vec<T>,
}

impl<T: Real> PeakList<T> {
    pub fn new(centers: Vec<T>, widths: Vec<T>) -> Result<Self> {
        if centers.len() != widths.len() {
            return Err(Error::DimensionMismatch {
                context: "peak list",
                expected: centers.len(),
                actual: widths.len(),
            });
        }
        if centers.iter().any(|c| !c.is_finite()) || widths.iter().any(|&w| !(w > T::zero())) {
            return Err(invalid("peak centers must be finite and widths positive"));
        }
        let mut pairs: Vec<(T, T)> = centers.into_iter().zip(widths).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        let (centers, widths) = pairs.into_iter().unzip();
        Ok(Self { centers, widths })
    }

    pub fn empty() -> Self {
        Self {
            centers: Vec::new(),
            widths: Vec::new(),
        }
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn widths(&self) -> &[T] {
        &self.widths
    }

    pub fn found_count(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Largest center deviation against `other` under sorted pairing, if the counts agree.
    pub fn max_deviation(&self, other: &Self) -> Option<T> {
        if self.found_count() != other.found_count() {
            return None;
        }
        Some(
            self.centers
                .iter()
                .zip(&other.centers)
                .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())),
        )
    }
}
