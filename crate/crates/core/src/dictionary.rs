//! Overcomplete Lorentzian dictionary and the projection sampling matrix.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::peaks::PeakList;
use crate::scalar::Real;
use crate::spectrum::lorentzian;

/// `L[j][k] = lorentzian(measurement_grid[j]; candidates[k], widths[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary<T> {
    measurement_grid: Vec<T>,
    candidates: Vec<T>,
    widths: Vec<T>,
    matrix: Matrix<T>,
    backbone_spacing: T,
}

fn check_sorted<T: Real>(v: &[T], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(invalid(format!("{what} is empty")));
    }
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(invalid(format!("{what} must be finite and sorted ascending")));
    }
    Ok(())
}

fn min_spacing<T: Real>(v: &[T]) -> T {
    v.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > T::zero())
        .fold(T::infinity(), |m, d| m.min(d))
}

impl<T: Real> Dictionary<T> {
    /// Builds the dictionary. `widths` is either one shared width or one per candidate.
    pub fn build(measurement_grid: &[T], candidates: &[T], widths: &[T]) -> Result<Self> {
        check_sorted(measurement_grid, "measurement grid")?;
        check_sorted(candidates, "candidate grid")?;
        let widths: Vec<T> = match widths.len() {
            1 => vec![widths[0]; candidates.len()],
            n if n == candidates.len() => widths.to_vec(),
            n => {
                return Err(Error::DimensionMismatch {
                    context: "dictionary widths",
                    expected: candidates.len(),
                    actual: n,
                })
            }
        };
        if widths.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(invalid("dictionary widths must be positive"));
        }
        let matrix = Matrix::from_fn(measurement_grid.len(), candidates.len(), |j, k| {
            lorentzian(measurement_grid[j], candidates[k], widths[k])
        });
        let spacing = min_spacing(candidates);
        Ok(Self {
            measurement_grid: measurement_grid.to_vec(),
            candidates: candidates.to_vec(),
            widths,
            matrix,
            backbone_spacing: if spacing.is_finite() { spacing } else { T::one() },
        })
    }

    pub fn measurement_grid(&self) -> &[T] {
        &self.measurement_grid
    }

    pub fn candidates(&self) -> &[T] {
        &self.candidates
    }

    pub fn widths(&self) -> &[T] {
        &self.widths
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    /// Number of measurement frequencies `M`.
    pub fn m(&self) -> usize {
        self.measurement_grid.len()
    }

    /// Number of candidate centers `N`.
    pub fn n(&self) -> usize {
        self.candidates.len()
    }

    /// Spacing of the grid this dictionary (or its ancestor before refinement) was built on.
    pub fn backbone_spacing(&self) -> T {
        self.backbone_spacing
    }

    /// Local candidate spacing around index `k`.
    pub fn local_spacing(&self, k: usize) -> T {
        let n = self.candidates.len();
        if n < 2 {
            return self.backbone_spacing;
        }
        let left = if k > 0 { Some(self.candidates[k] - self.candidates[k - 1]) } else { None };
        let right = if k + 1 < n { Some(self.candidates[k + 1] - self.candidates[k]) } else { None };
        match (left, right) {
            (Some(l), Some(r)) => l.min(r),
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => self.backbone_spacing,
        }
    }

    /// `L a`: the clean dip at every measurement frequency.
    pub fn apply(&self, amplitudes: &[T]) -> Result<Vec<T>> {
        if amplitudes.len() != self.n() {
            return Err(Error::DimensionMismatch {
                context: "amplitude vector",
                expected: self.n(),
                actual: amplitudes.len(),
            });
        }
        Ok(self.matrix.matvec(amplitudes))
    }

    /// Row of `S L` for a projection applying the tones at `indices` (entries of `S` are 1).
    pub fn design_row(&self, indices: &[usize]) -> Result<Vec<T>> {
        let mut row = vec![T::zero(); self.n()];
        for &j in indices {
            if j >= self.m() {
                return Err(invalid(format!("tone index {j} out of range 0..{}", self.m())));
            }
            for (r, &l) in row.iter_mut().zip(self.matrix.row(j)) {
                *r += l;
            }
        }
        Ok(row)
    }

    /// Densifies the candidate grid around converged peaks.
    ///
    /// Inside `center +/- 2 width` of every peak the candidate spacing becomes
    /// the backbone spacing divided by 4 and the candidate width is the peak's
    /// estimated width. Elsewhere only every 4th backbone candidate is kept.
    /// An empty peak list returns the dictionary unchanged.
    pub fn refine(&self, peaks: &PeakList<T>) -> Result<Self> {
        self.refine_with(peaks, &RefineOptions::default())
    }

    pub fn refine_with(&self, peaks: &PeakList<T>, options: &RefineOptions) -> Result<Self> {
        if peaks.is_empty() {
            return Ok(self.clone());
        }
        if options.density_factor == 0 || options.backbone_stride == 0 {
            return Err(invalid("refinement factors must be positive"));
        }
        let h = self.backbone_spacing;
        let fine = h / T::from_usize_lossy(options.density_factor);
        let origin = self.candidates[0];
        let last = self.candidates[self.n() - 1];
        let reach = T::lit(options.half_width_in_widths);

        let mut intervals: Vec<(T, T)> = peaks
            .centers()
            .iter()
            .zip(peaks.widths())
            .map(|(&c, &w)| ((c - reach * w).max(origin), (c + reach * w).min(last)))
            .filter(|(lo, hi)| lo <= hi)
            .collect();
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        let mut merged: Vec<(T, T)> = Vec::new();
        for (lo, hi) in intervals {
            match merged.last_mut() {
                Some(prev) if lo <= prev.1 => prev.1 = prev.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        let inside = |nu: T| merged.iter().any(|&(lo, hi)| nu >= lo && nu <= hi);

        let mut candidates: Vec<T> = Vec::new();
        let mut widths: Vec<T> = Vec::new();
        let eps = fine * T::lit(1e-9);

        let n_backbone = ((last - origin) / h + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
        let mut i = 0usize;
        while i <= n_backbone {
            let nu = origin + h * T::from_usize_lossy(i);
            if !inside(nu) {
                candidates.push(nu);
                widths.push(self.width_near(nu));
            }
            i += options.backbone_stride;
        }
        for &(lo, hi) in &merged {
            let start = ((lo - origin) / fine - T::lit(1e-9)).ceil().to_usize().unwrap_or(0);
            let stop = ((hi - origin) / fine + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
            for m in start..=stop {
                let nu = origin + fine * T::from_usize_lossy(m);
                if nu > last + eps {
                    break;
                }
                candidates.push(nu);
                widths.push(nearest_peak_width(peaks, nu));
            }
        }

        let mut pairs: Vec<(T, T)> = candidates.into_iter().zip(widths).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        pairs.dedup_by(|a, b| (a.0 - b.0).abs() <= eps);
        let (candidates, widths): (Vec<T>, Vec<T>) = pairs.into_iter().unzip();

        let mut refined = Self::build(&self.measurement_grid, &candidates, &widths)?;
        refined.backbone_spacing = h;
        Ok(refined)
    }

    fn width_near(&self, nu: T) -> T {
        let k = self.candidates.partition_point(|&c| c < nu);
        let left_is_nearer = k > 0 && (k == self.n() || nu - self.candidates[k - 1] < self.candidates[k] - nu);
        let k = if left_is_nearer { k - 1 } else { k };
        self.widths[k]
    }
}

fn nearest_peak_width<T: Real>(peaks: &PeakList<T>, nu: T) -> T {
    peaks
        .centers()
        .iter()
        .zip(peaks.widths())
        .min_by(|a, b| {
            (*a.0 - nu)
                .abs()
                .partial_cmp(&(*b.0 - nu).abs())
                .expect("finite")
        })
        .map(|(_, &w)| w)
        .expect("nonempty peak list")
}

/// Knobs of [`Dictionary::refine_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct RefineOptions {
    pub density_factor: usize,
    pub half_width_in_widths: f64,
    pub backbone_stride: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            density_factor: 4,
            half_width_in_widths: 2.0,
            backbone_stride: 4,
        }
    }
}

/// Nonnegative amplitude vector over the candidate grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeVector<T>(Vec<T>);

impl<T: Real> AmplitudeVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
            return Err(invalid("amplitudes must be finite and nonnegative"));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> T {
        self.0.iter().fold(T::zero(), |m, &v| m.max(v))
    }
}

/// Which measurement-grid indices each projection applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMatrix {
    m: usize,
    tones_per_row: usize,
    rows: Vec<Vec<usize>>,
}

pub const MAX_TONES: usize = 4;

impl SamplingMatrix {
    pub fn new(m: usize, tones_per_row: usize) -> Result<Self> {
        if !(1..=MAX_TONES).contains(&tones_per_row) {
            return Err(invalid(format!("tones per row must be in 1..={MAX_TONES}")));
        }
        if tones_per_row > m {
            return Err(Error::InsufficientFrequencies {
                available: m,
                requested: tones_per_row,
            });
        }
        Ok(Self {
            m,
            tones_per_row,
            rows: Vec::new(),
        })
    }

    pub fn push(&mut self, mut row: Vec<usize>) -> Result<()> {
        row.sort_unstable();
        if row.len() != self.tones_per_row {
            return Err(Error::DimensionMismatch {
                context: "sampling row tones",
                expected: self.tones_per_row,
                actual: row.len(),
            });
        }
        if row.windows(2).any(|w| w[0] == w[1]) || row.iter().any(|&j| j >= self.m) {
            return Err(invalid("sampling row has duplicate or out-of-range tones"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tones_per_row(&self) -> usize {
        self.tones_per_row
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row `i` as a dense 0/1 vector of length `M`.
    pub fn dense_row<T: Real>(&self, i: usize) -> Vec<T> {
        let mut row = vec![T::zero(); self.m];
        for &j in &self.rows[i] {
            row[j] = T::one();
        }
        row
    }
}

/// Draws `tones` distinct grid indices uniformly from `0..m` minus `excluded`.
///
/// The result is sorted ascending.
pub fn draw_projection<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    tones: usize,
    excluded: &BTreeSet<usize>,
) -> Result<Vec<usize>> {
    let allowed: Vec<usize> = (0..m).filter(|j| !excluded.contains(j)).collect();
    if tones > allowed.len() || tones == 0 {
        return Err(Error::InsufficientFrequencies {
            available: allowed.len(),
            requested: tones,
        });
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, allowed.len(), tones)
        .into_iter()
        .map(|i| allowed[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}
