//! Forward model of an NV-ensemble ESR spectrum.
//!
//! Each of the four NV orientations contributes an `m_s = -1` and an
//! `m_s = +1` transition at `D -/+ gamma * |B . n|`, so a generic bias field
//! yields eight Lorentzian dips below the reference fluorescence level.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Number of resonances of an NV ensemble (4 orientations x 2 transitions).
pub const NV_RESONANCES: usize = 8;

/// Normalized Lorentzian with unit area and full width at half maximum `width`.
///
/// This is the single definition of the lineshape; the dictionary, the
/// synthetic spectra and the simulated backend all evaluate it through here.
#[inline]
pub fn lorentzian<T: Real>(nu: T, center: T, width: T) -> T {
    let two = T::lit(2.0);
    let d = nu - center;
    (two / (T::PI() * width)) / (T::one() + T::lit(4.0) * d * d / (width * width))
}

/// Dip area that produces a peak dip of `depth` for a Lorentzian of FWHM `width`.
pub fn amplitude_for_depth<T: Real>(depth: T, width: T) -> T {
    depth * T::PI() * width / T::lit(2.0)
}

/// Closed frequency interval in MHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyWindow<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> FrequencyWindow<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("window [{lo}, {hi}] is empty or not finite")));
        }
        Ok(Self { lo, hi })
    }

    pub fn centered(center: T, width: T) -> Result<Self> {
        let half = width / T::lit(2.0);
        Self::new(center - half, center + half)
    }

    #[inline]
    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    #[inline]
    pub fn contains(&self, nu: T) -> bool {
        nu >= self.lo && nu <= self.hi
    }

    pub fn check(&self, nu: T) -> Result<()> {
        if self.contains(nu) {
            Ok(())
        } else {
            Err(Error::OutOfWindow {
                frequency: nu.as_f64(),
                lo: self.lo.as_f64(),
                hi: self.hi.as_f64(),
            })
        }
    }

    /// `n` linearly spaced frequencies spanning the window.
    pub fn grid(&self, n: usize) -> Vec<T> {
        crate::scalar::linspace(self.lo, self.hi, n)
    }

    /// Frequencies at a fixed `spacing` starting at `lo` and not exceeding `hi`.
    pub fn grid_with_spacing(&self, spacing: T) -> Vec<T> {
        let n = (self.width() / spacing + T::lit(1e-9)).floor();
        let n = n.to_usize().unwrap_or(0) + 1;
        (0..n)
            .map(|i| self.lo + spacing * T::from_usize_lossy(i))
            .collect()
    }
}

/// Zero-field splitting, gyromagnetic ratio and the four NV symmetry axes.
#[derive(Debug, Clone, PartialEq)]
pub struct NvConstants<T> {
    /// MHz
    pub zero_field_splitting: T,
    /// MHz per Gauss
    pub gyromagnetic_ratio: T,
    pub orientation_axes: [[T; 3]; 4],
}

impl<T: Real> Default for NvConstants<T> {
    fn default() -> Self {
        let s = T::one() / T::lit(3.0).sqrt();
        let (p, m) = (s, -s);
        Self {
            zero_field_splitting: T::lit(2870.0),
            gyromagnetic_ratio: T::lit(2.87),
            orientation_axes: [[p, p, p], [p, m, m], [m, p, m], [m, m, p]],
        }
    }
}

impl<T: Real> NvConstants<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.zero_field_splitting > T::zero() && self.gyromagnetic_ratio > T::zero()) {
            return Err(invalid("D and gamma must be positive"));
        }
        let tol = T::lit(1e-6).max(T::epsilon() * T::lit(64.0));
        for axis in &self.orientation_axes {
            if (norm3(axis) - T::one()).abs() > tol {
                return Err(invalid("orientation axes must be unit vectors"));
            }
        }
        Ok(())
    }
}

#[inline]
fn dot3<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn norm3<T: Real>(a: &[T; 3]) -> T {
    dot3(a, a).sqrt()
}

/// Bias magnetic field: magnitude in Gauss and a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasField<T> {
    magnitude: T,
    direction: [T; 3],
}

impl<T: Real> BiasField<T> {
    /// Normalizes `direction`; rejects a zero direction or a negative magnitude.
    pub fn new(magnitude: T, direction: [T; 3]) -> Result<Self> {
        if !(magnitude >= T::zero()) || !magnitude.is_finite() {
            return Err(invalid("field magnitude must be finite and nonnegative"));
        }
        let n = norm3(&direction);
        if !(n > T::zero()) || !n.is_finite() {
            return Err(invalid("field direction must be a nonzero finite vector"));
        }
        Ok(Self {
            magnitude,
            direction: [direction[0] / n, direction[1] / n, direction[2] / n],
        })
    }

    /// Direction from polar angle `theta` and azimuth `phi` (radians).
    pub fn from_angles(magnitude: T, theta: T, phi: T) -> Result<Self> {
        let st = theta.sin();
        Self::new(magnitude, [st * phi.cos(), st * phi.sin(), theta.cos()])
    }

    pub fn magnitude(&self) -> T {
        self.magnitude
    }

    pub fn direction(&self) -> [T; 3] {
        self.direction
    }

    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(self.magnitude * factor, self.direction)
    }
}

/// Sorted Zeeman-split resonance frequencies without any window check.
pub fn resonance_centers<T: Real>(field: &BiasField<T>, consts: &NvConstants<T>) -> [T; NV_RESONANCES] {
    let d = consts.zero_field_splitting;
    let mut out = [d; NV_RESONANCES];
    for (i, axis) in consts.orientation_axes.iter().enumerate() {
        let parallel = field.magnitude * dot3(&field.direction, axis).abs();
        let shift = consts.gyromagnetic_ratio * parallel;
        out[2 * i] = d - shift;
        out[2 * i + 1] = d + shift;
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite resonance"));
    out
}

/// Ground-truth peak parameters, sorted by center frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceSet<T> {
    centers: Vec<T>,
    widths: Vec<T>,
    amplitudes: Vec<T>,
}

impl<T: Real> ResonanceSet<T> {
    /// Builds a set from parallel lists, sorting all three by center.
    pub fn new(centers: Vec<T>, widths: Vec<T>, amplitudes: Vec<T>) -> Result<Self> {
        let n = centers.len();
        if widths.len() != n || amplitudes.len() != n {
            return Err(Error::DimensionMismatch {
                context: "resonance lists",
                expected: n,
                actual: widths.len().min(amplitudes.len()),
            });
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(invalid("resonance centers must be finite"));
        }
        if widths.iter().any(|&w| !(w > T::zero())) {
            return Err(invalid("resonance widths must be positive"));
        }
        if amplitudes.iter().any(|&a| !(a >= T::zero())) {
            return Err(invalid("resonance amplitudes must be nonnegative"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| centers[i].partial_cmp(&centers[j]).expect("finite"));
        Ok(Self {
            centers: order.iter().map(|&i| centers[i]).collect(),
            widths: order.iter().map(|&i| widths[i]).collect(),
            amplitudes: order.iter().map(|&i| amplitudes[i]).collect(),
        })
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn widths(&self) -> &[T] {
        &self.widths
    }

    pub fn amplitudes(&self) -> &[T] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Total dip `sum_k L(nu; nu_k, sigma_k) a_k` at one frequency.
    pub fn dip_at(&self, nu: T) -> T {
        self.centers
            .iter()
            .zip(&self.widths)
            .zip(&self.amplitudes)
            .map(|((&c, &w), &a)| lorentzian(nu, c, w) * a)
            .sum()
    }

    /// Largest total dip over `grid`.
    pub fn max_dip(&self, grid: &[T]) -> T {
        grid.iter()
            .map(|&nu| self.dip_at(nu))
            .fold(T::zero(), |m, d| m.max(d))
    }

    /// Smallest distance between two centers (infinite for fewer than two peaks).
    pub fn min_separation(&self) -> T {
        self.centers
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(T::infinity(), |m, d| m.min(d))
    }
}

/// NV resonances for `field`, all sharing `width` and `amplitude`.
///
/// Fails when any resonance falls outside `window`.
pub fn compute_resonances<T: Real>(
    field: &BiasField<T>,
    consts: &NvConstants<T>,
    window: &FrequencyWindow<T>,
    width: T,
    amplitude: T,
) -> Result<ResonanceSet<T>> {
    consts.validate()?;
    let centers = resonance_centers(field, consts);
    for &c in &centers {
        window.check(c)?;
    }
    ResonanceSet::new(
        centers.to_vec(),
        vec![width; NV_RESONANCES],
        vec![amplitude; NV_RESONANCES],
    )
}

/// One synthetic fluorescence spectrum sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSample<T> {
    pub grid: Vec<T>,
    pub clean_counts: Vec<T>,
    pub noisy_counts: Vec<T>,
    pub reference_power: T,
    pub noise_sigma: T,
    pub snr: T,
}

/// Noise standard deviation giving `snr` for a spectrum whose deepest dip is `max_dip`.
///
/// An infinite `snr` is the noiseless limit.
pub fn noise_sigma_for_snr<T: Real>(max_dip: T, snr: T) -> Result<T> {
    if !(snr > T::zero()) {
        return Err(invalid("snr must be positive"));
    }
    if snr.is_infinite() {
        return Ok(T::zero());
    }
    Ok(max_dip / snr)
}

/// Standard normal draw converted to `T`.
#[inline]
pub fn gaussian<T: Real>(rng: &mut impl rand::Rng) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

/// Synthesizes `P_r - sum_k L a_k` on `grid` plus Gaussian noise of `max dip / snr`.
pub fn synthesize_spectrum<T: Real>(
    resonances: &ResonanceSet<T>,
    grid: &[T],
    reference_power: T,
    snr: T,
    seed: u64,
) -> Result<SpectrumSample<T>> {
    if grid.is_empty() {
        return Err(invalid("spectrum grid is empty"));
    }
    let clean_counts: Vec<T> = grid
        .iter()
        .map(|&nu| reference_power - resonances.dip_at(nu))
        .collect();
    let max_dip = clean_counts
        .iter()
        .fold(T::zero(), |m, &c| m.max(reference_power - c));
    let noise_sigma = noise_sigma_for_snr(max_dip, snr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy_counts = clean_counts
        .iter()
        .map(|&c| {
            let z: T = gaussian(&mut rng);
            if noise_sigma == T::zero() {
                c
            } else {
                c + noise_sigma * z
            }
        })
        .collect();
    Ok(SpectrumSample {
        grid: grid.to_vec(),
        clean_counts,
        noisy_counts,
        reference_power,
        noise_sigma,
        snr,
    })
}
