//! Damped least-squares (Levenberg-Marquardt) fit of a sum of Lorentzian dips.
//!
//! The model covers both acquisition styles: an observation is a count taken
//! with zero or more simultaneous tones,
//!
//! ```text
//! count = baseline - sum_tones sum_k a_k L(tone; c_k, w_k)
//! ```
//!
//! so a raster point is a single-tone observation and a reference count is an
//! observation with no tones.

use thiserror::Error;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, cholesky_solve_in_place};
use crate::peaks::PeakList;
use crate::scalar::Real;
use crate::spectrum::{amplitude_for_depth, lorentzian, FrequencyWindow};

/// Why a fit was not accepted.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FitFailure {
    #[error("not enough observations for the parameter count")]
    TooFewObservations,
    #[error("could not find enough initial dips")]
    TooFewCandidates,
    #[error("iteration limit reached before convergence")]
    NotConverged,
    #[error("normal equations became singular")]
    Singular,
    #[error("a fitted center left the frequency window")]
    OutOfWindow,
    #[error("a fitted width is outside the accepted range")]
    WidthOutOfRange,
    #[error("a fitted dip is not statistically significant")]
    Insignificant,
    #[error("two fitted peaks collapsed onto one resonance")]
    Merged,
}

impl From<FitFailure> for Error {
    fn from(f: FitFailure) -> Self {
        Error::InvalidInput(format!("fit failed: {f}"))
    }
}

/// A count observed with a set of simultaneous tones; `weight` counts repeated observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub tones: Vec<T>,
    pub count: T,
    pub weight: T,
}

impl<T: Real> Observation<T> {
    pub fn single(tone: T, count: T) -> Self {
        Self {
            tones: vec![tone],
            count,
            weight: T::one(),
        }
    }
}

/// Acceptance criteria and iteration controls of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions<T> {
    pub window: FrequencyWindow<T>,
    /// Expected linewidth; sets the smoothing scale of the automatic initialization.
    pub width_guess: T,
    pub min_width: T,
    pub max_width: T,
    /// Minimum amplitude / standard error for a dip to count as resolved.
    pub min_significance: T,
    /// Minimum center separation as a fraction of the smaller width.
    pub min_separation_fraction: T,
    pub max_iterations: usize,
    /// Hold every width at its starting value and fit centers and amplitudes only.
    pub fixed_width: bool,
}

impl<T: Real> FitOptions<T> {
    /// Options for a scenario whose characteristic linewidth is `width`.
    pub fn for_width(window: FrequencyWindow<T>, width: T) -> Self {
        Self {
            window,
            width_guess: width,
            min_width: width / T::lit(4.0),
            max_width: width * T::lit(4.0),
            min_significance: T::lit(3.0),
            min_separation_fraction: T::lit(0.5),
            max_iterations: 200,
            fixed_width: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianFit<T> {
    pub peaks: PeakList<T>,
    /// Dip areas, in the same (sorted) order as `peaks`.
    pub amplitudes: Vec<T>,
    pub baseline: T,
    /// Root mean square residual per unit weight.
    pub residual_rms: T,
    pub iterations: usize,
}

/// Initial parameters: baseline plus one `(center, width, amplitude)` per dip.
#[derive(Debug, Clone, PartialEq)]
pub struct FitStart<T> {
    pub baseline: T,
    pub centers: Vec<T>,
    pub widths: Vec<T>,
    pub amplitudes: Vec<T>,
}

/// Fits `n_peaks` Lorentzian dips to single-tone `counts` on `grid`.
///
/// Without `init` the starting centers are the `n_peaks` deepest local minima
/// of the smoothed data.
pub fn fit_lorentzians<T: Real>(
    grid: &[T],
    counts: &[T],
    n_peaks: usize,
    init: Option<&PeakList<T>>,
    options: &FitOptions<T>,
) -> Result<LorentzianFit<T>, FitFailure> {
    if grid.len() != counts.len() || grid.len() < 3 * n_peaks + 1 {
        return Err(FitFailure::TooFewObservations);
    }
    let baseline = median(counts);
    let start = match init {
        Some(peaks) => {
            if peaks.found_count() != n_peaks {
                return Err(FitFailure::TooFewCandidates);
            }
            let amplitudes = peaks
                .centers()
                .iter()
                .zip(peaks.widths())
                .map(|(&c, &w)| {
                    let depth = (baseline - interpolate(grid, counts, c)).max(T::zero());
                    amplitude_for_depth(depth.max(T::epsilon()), w)
                })
                .collect();
            FitStart {
                baseline,
                centers: peaks.centers().to_vec(),
                widths: peaks.widths().to_vec(),
                amplitudes,
            }
        }
        None => initial_guess(grid, counts, n_peaks, options.width_guess)?,
    };
    let observations: Vec<Observation<T>> = grid
        .iter()
        .zip(counts)
        .map(|(&nu, &c)| Observation::single(nu, c))
        .collect();
    fit_observations(&observations, &start, options)
}

/// Baseline and dips from the smoothed data's deepest separated local minima.
pub fn initial_guess<T: Real>(
    grid: &[T],
    counts: &[T],
    n_peaks: usize,
    width_guess: T,
) -> Result<FitStart<T>, FitFailure> {
    let n = grid.len();
    if n < 3 {
        return Err(FitFailure::TooFewObservations);
    }
    // Matched filter: a Lorentzian kernel of the expected width, cut at two widths.
    let reach = width_guess * T::lit(2.0);
    let smoothed: Vec<T> = (0..n)
        .map(|i| {
            let lo = grid.partition_point(|&g| g < grid[i] - reach);
            let hi = grid.partition_point(|&g| g <= grid[i] + reach);
            let (mut acc, mut norm) = (T::zero(), T::zero());
            for j in lo..hi {
                let k = lorentzian(grid[j], grid[i], width_guess);
                acc += k * counts[j];
                norm += k;
            }
            acc / norm
        })
        .collect();
    let baseline = median(counts);

    // Deepest points first, greedily keeping those 1.5 linewidths apart.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| smoothed[a].partial_cmp(&smoothed[b]).expect("finite counts"));
    let separation = width_guess * T::lit(1.5);
    let mut picked: Vec<usize> = Vec::with_capacity(n_peaks);
    for i in order {
        if picked.len() == n_peaks {
            break;
        }
        if smoothed[i] >= baseline {
            break;
        }
        let is_local_min = (i == 0 || smoothed[i] <= smoothed[i - 1]) && (i + 1 == n || smoothed[i] <= smoothed[i + 1]);
        if !is_local_min {
            continue;
        }
        if picked.iter().all(|&p| (grid[p] - grid[i]).abs() >= separation) {
            picked.push(i);
        }
    }
    if picked.len() < n_peaks {
        return Err(FitFailure::TooFewCandidates);
    }
    picked.sort_unstable();
    Ok(FitStart {
        baseline,
        centers: picked.iter().map(|&i| grid[i]).collect(),
        widths: vec![width_guess; n_peaks],
        amplitudes: picked
            .iter()
            .map(|&i| amplitude_for_depth(baseline - smoothed[i], width_guess))
            .collect(),
    })
}

fn median<T: Real>(values: &[T]) -> T {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite counts"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

fn interpolate<T: Real>(grid: &[T], values: &[T], x: T) -> T {
    let k = grid.partition_point(|&g| g < x);
    if k == 0 {
        return values[0];
    }
    if k >= grid.len() {
        return values[grid.len() - 1];
    }
    let (x0, x1) = (grid[k - 1], grid[k]);
    let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { T::zero() };
    values[k - 1] + t * (values[k] - values[k - 1])
}

/// Lineshape value and its derivatives with respect to center and width.
#[inline]
fn lorentzian_with_grad<T: Real>(nu: T, c: T, w: T) -> (T, T, T) {
    let two = T::lit(2.0);
    let u = two * (nu - c) / w;
    let d = T::one() + u * u;
    let pi = T::PI();
    let value = two / (pi * w * d);
    let d_center = T::lit(8.0) * u / (pi * w * w * d * d);
    let d_width = -two * (T::one() - u * u) / (pi * w * w * d * d);
    (value, d_center, d_width)
}

struct Model<'a, T> {
    obs: &'a [Observation<T>],
    n_peaks: usize,
    fixed_width: bool,
}

impl<T: Real> Model<'_, T> {
    fn n_params(&self) -> usize {
        1 + 3 * self.n_peaks
    }

    fn predict(&self, p: &[T], o: &Observation<T>) -> T {
        let mut m = p[0];
        for &nu in &o.tones {
            for k in 0..self.n_peaks {
                let (c, w, a) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
                m -= a * lorentzian(nu, c, w);
            }
        }
        m
    }

    fn cost(&self, p: &[T]) -> T {
        self.obs
            .iter()
            .map(|o| {
                let r = o.count - self.predict(p, o);
                o.weight * r * r
            })
            .sum()
    }

    /// Weighted normal equations `J^T W J` and `J^T W r`.
    fn normal_equations(&self, p: &[T], jtj: &mut [T], jtr: &mut [T]) {
        let np = self.n_params();
        jtj.iter_mut().for_each(|v| *v = T::zero());
        jtr.iter_mut().for_each(|v| *v = T::zero());
        let mut row = vec![T::zero(); np];
        let mut active: Vec<usize> = Vec::with_capacity(np);
        for o in self.obs {
            row.iter_mut().for_each(|v| *v = T::zero());
            row[0] = T::one();
            let mut model = p[0];
            for &nu in &o.tones {
                for k in 0..self.n_peaks {
                    let (c, w, a) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
                    let (l, dc, dw) = lorentzian_with_grad(nu, c, w);
                    model -= a * l;
                    row[1 + 3 * k] -= a * dc;
                    if !self.fixed_width {
                        row[2 + 3 * k] -= a * dw;
                    }
                    row[3 + 3 * k] -= l;
                }
            }
            let r = o.count - model;
            active.clear();
            active.extend((0..np).filter(|&i| row[i] != T::zero()));
            for &i in &active {
                let wi = o.weight * row[i];
                jtr[i] += wi * r;
                for &j in &active {
                    jtj[i * np + j] += wi * row[j];
                }
            }
        }
        if self.fixed_width {
            // Decoupled unit rows keep the system nonsingular; the step is zero there.
            for k in 0..self.n_peaks {
                let i = 2 + 3 * k;
                jtj[i * np + i] = T::one();
            }
        }
    }
}

/// Levenberg-Marquardt on arbitrary multi-tone observations from `start`.
///
/// Only steps that lower the weighted squared residual are accepted.
pub fn fit_observations<T: Real>(
    observations: &[Observation<T>],
    start: &FitStart<T>,
    options: &FitOptions<T>,
) -> Result<LorentzianFit<T>, FitFailure> {
    let n_peaks = start.centers.len();
    if start.widths.len() != n_peaks || start.amplitudes.len() != n_peaks {
        return Err(FitFailure::TooFewCandidates);
    }
    let model = Model {
        obs: observations,
        n_peaks,
        fixed_width: options.fixed_width,
    };
    let np = model.n_params();
    let free = if options.fixed_width { np - n_peaks } else { np };
    let total_weight: T = observations.iter().map(|o| o.weight).sum();
    if observations.len() < free || total_weight <= T::from_usize_lossy(free) {
        return Err(FitFailure::TooFewObservations);
    }

    let mut p = Vec::with_capacity(np);
    p.push(start.baseline);
    for k in 0..n_peaks {
        p.push(start.centers[k]);
        p.push(start.widths[k]);
        p.push(start.amplitudes[k]);
    }
    let mut cost = model.cost(&p);
    let mut jtj = vec![T::zero(); np * np];
    let mut jtr = vec![T::zero(); np];
    let mut damping = T::lit(1e-3);
    let mut iterations = 0usize;
    let mut converged = false;
    let width_floor = options.min_width * T::lit(0.05);

    'outer: while iterations < options.max_iterations {
        iterations += 1;
        model.normal_equations(&p, &mut jtj, &mut jtr);
        loop {
            let mut a = jtj.clone();
            for i in 0..np {
                let d = jtj[i * np + i];
                a[i * np + i] = d + damping * d.max(T::lit(1e-12));
            }
            let mut step = jtr.clone();
            if cholesky_in_place(&mut a, np).is_err() {
                damping *= T::lit(10.0);
                if damping > T::lit(1e12) {
                    return Err(FitFailure::Singular);
                }
                continue;
            }
            cholesky_solve_in_place(&a, np, &mut step);
            let candidate: Vec<T> = p.iter().zip(&step).map(|(&x, &d)| x + d).collect();
            let widths_ok = (0..n_peaks).all(|k| candidate[2 + 3 * k] > width_floor);
            let new_cost = if widths_ok { model.cost(&candidate) } else { T::infinity() };
            if new_cost.is_finite() && new_cost <= cost {
                let decrease = cost - new_cost;
                let step_small = step
                    .iter()
                    .zip(&p)
                    .all(|(&d, &x)| d.abs() <= T::lit(1e-9) * (x.abs() + T::lit(1e-6)));
                p = candidate;
                cost = new_cost;
                damping = (damping / T::lit(3.0)).max(T::lit(1e-12));
                if decrease <= T::lit(1e-10) * cost.max(T::min_positive_value()) || step_small {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            damping *= T::lit(4.0);
            if damping > T::lit(1e12) {
                // No descent direction left at machine precision: a stationary point.
                converged = true;
                break 'outer;
            }
        }
    }
    if !converged {
        return Err(FitFailure::NotConverged);
    }

    let dof = (total_weight - T::from_usize_lossy(free)).max(T::one());
    let sigma2 = cost / dof;
    model.normal_equations(&p, &mut jtj, &mut jtr);
    let mut chol = jtj.clone();
    if cholesky_in_place(&mut chol, np).is_err() {
        return Err(FitFailure::Singular);
    }

    let mut peaks: Vec<(T, T, T, usize)> = (0..n_peaks)
        .map(|k| (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k], 3 + 3 * k))
        .collect();
    peaks.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite fit"));
    for &(c, w, a, idx) in &peaks {
        if !options.window.contains(c) {
            return Err(FitFailure::OutOfWindow);
        }
        if !(w >= options.min_width && w <= options.max_width) {
            return Err(FitFailure::WidthOutOfRange);
        }
        let mut e = vec![T::zero(); np];
        e[idx] = T::one();
        cholesky_solve_in_place(&chol, np, &mut e);
        let std_err = (sigma2 * e[idx]).max(T::zero()).sqrt();
        if !(a > T::zero()) || (std_err > T::zero() && a < options.min_significance * std_err) {
            return Err(FitFailure::Insignificant);
        }
    }
    for pair in peaks.windows(2) {
        let limit = options.min_separation_fraction * pair[0].1.min(pair[1].1);
        if pair[1].0 - pair[0].0 < limit {
            return Err(FitFailure::Merged);
        }
    }
    let centers = peaks.iter().map(|x| x.0).collect();
    let widths = peaks.iter().map(|x| x.1).collect();
    Ok(LorentzianFit {
        peaks: PeakList::new(centers, widths).map_err(|_| FitFailure::WidthOutOfRange)?,
        amplitudes: peaks.iter().map(|x| x.2).collect(),
        baseline: p[0],
        residual_rms: (cost / total_weight).sqrt(),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::ResonanceSet;

    fn window() -> FrequencyWindow<f64> {
        FrequencyWindow::centered(2870.0, 400.0).unwrap()
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (nu, c, w) = (2873.0f64, 2870.0, 9.0);
        let (_, dc, dw) = lorentzian_with_grad(nu, c, w);
        let h = 1e-4;
        let fd_c = (lorentzian(nu, c + h, w) - lorentzian(nu, c - h, w)) / (2.0 * h);
        let fd_w = (lorentzian(nu, c, w + h) - lorentzian(nu, c, w - h)) / (2.0 * h);
        assert!((dc - fd_c).abs() < 1e-8);
        assert!((dw - fd_w).abs() < 1e-8);
    }

    #[test]
    fn clean_single_peak_is_recovered() {
        let truth = ResonanceSet::new(vec![2861.37], vec![12.0], vec![400.0]).unwrap();
        let grid = window().grid(401);
        let counts: Vec<f64> = grid.iter().map(|&nu| 1000.0 - truth.dip_at(nu)).collect();
        let fit = fit_lorentzians(&grid, &counts, 1, None, &FitOptions::for_width(window(), 10.0)).unwrap();
        assert!((fit.peaks.centers()[0] - 2861.37).abs() < 1e-3);
        assert!((fit.peaks.widths()[0] - 12.0).abs() < 1e-3);
        assert!((fit.baseline - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn fixed_width_fit_moves_centers_only() {
        let truth = ResonanceSet::new(vec![2830.4, 2905.9], vec![12.0; 2], vec![400.0; 2]).unwrap();
        let grid = window().grid(401);
        let counts: Vec<f64> = grid.iter().map(|&nu| 1000.0 - truth.dip_at(nu)).collect();
        let options = FitOptions {
            fixed_width: true,
            ..FitOptions::for_width(window(), 12.0)
        };
        let fit = fit_lorentzians(&grid, &counts, 2, None, &options).unwrap();
        assert_eq!(fit.peaks.widths(), &[12.0, 12.0]);
        for (c, t) in fit.peaks.centers().iter().zip(truth.centers()) {
            assert!((c - t).abs() < 1e-4, "{c} vs {t}");
        }
    }

    #[test]
    fn flat_data_has_no_dips() {
        let grid = window().grid(401);
        let counts = vec![1000.0; grid.len()];
        let err = fit_lorentzians(&grid, &counts, 8, None, &FitOptions::for_width(window(), 10.0)).unwrap_err();
        assert_eq!(err, FitFailure::TooFewCandidates);
    }

    #[test]
    fn too_few_points() {
        let grid = window().grid(20);
        let counts = vec![1000.0; 20];
        let err = fit_lorentzians(&grid, &counts, 8, None, &FitOptions::for_width(window(), 10.0)).unwrap_err();
        assert_eq!(err, FitFailure::TooFewObservations);
    }
}
