//! Nonnegative total-variation reconstruction of the amplitude vector.
//!
//! The reconstruction minimizes
//!
//! ```text
//! F(a) = |S L a - y|^2 + lambda * TV(a),   a >= 0
//! ```
//!
//! with a monotone accelerated proximal-gradient scheme (MFISTA with
//! backtracking and momentum restart). The proximal step is the exact prox of
//! `TV + indicator(a >= 0)`, so every iterate is nonnegative.

pub mod oracle;
pub mod tv;

pub use oracle::oracle_minimize;
pub use tv::{prox_tv, prox_tv_nonneg, total_variation};

use crate::acquisition::ProjectionRecord;
use crate::dictionary::{AmplitudeVector, Dictionary, SamplingMatrix};
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{norm_sq, Real};

/// Data of one reconstruction: the design `S L`, the dip vector `y` and the TV weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TvProblem<T> {
    design: Matrix<T>,
    y: Vec<T>,
    lambda: T,
}

impl<T: Real> TvProblem<T> {
    pub fn from_design(design: Matrix<T>, y: Vec<T>, lambda: T) -> Result<Self> {
        if design.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "observations vs design rows",
                expected: design.rows(),
                actual: y.len(),
            });
        }
        if design.cols() == 0 {
            return Err(invalid("design has no columns"));
        }
        let problem = Self { design, y, lambda };
        problem.check_lambda(lambda)?;
        Ok(problem)
    }

    /// Builds `S L` row by row from the sampled tones.
    pub fn from_sampling(
        sampling: &SamplingMatrix,
        dictionary: &Dictionary<T>,
        y: Vec<T>,
        lambda: T,
    ) -> Result<Self> {
        if sampling.m() != dictionary.m() {
            return Err(Error::DimensionMismatch {
                context: "sampling columns vs measurement grid",
                expected: dictionary.m(),
                actual: sampling.m(),
            });
        }
        let mut design = Matrix::with_cols(dictionary.n());
        for row in sampling.rows() {
            design.push_row(&dictionary.design_row(row)?)?;
        }
        Self::from_design(design, y, lambda)
    }

    fn check_lambda(&self, lambda: T) -> Result<()> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(invalid("lambda must be positive and finite"));
        }
        Ok(())
    }

    pub fn push_row(&mut self, row: &[T], observation: T) -> Result<()> {
        self.design.push_row(row)?;
        self.y.push(observation);
        Ok(())
    }

    /// Replaces `y`, e.g. after the mean reference estimate moved.
    pub fn set_observations(&mut self, y: Vec<T>) -> Result<()> {
        if y.len() != self.design.rows() {
            return Err(Error::DimensionMismatch {
                context: "observations vs design rows",
                expected: self.design.rows(),
                actual: y.len(),
            });
        }
        self.y = y;
        Ok(())
    }

    pub fn set_lambda(&mut self, lambda: T) -> Result<()> {
        self.check_lambda(lambda)?;
        self.lambda = lambda;
        Ok(())
    }

    pub fn design(&self) -> &Matrix<T> {
        &self.design
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn rows(&self) -> usize {
        self.design.rows()
    }

    pub fn n(&self) -> usize {
        self.design.cols()
    }

    /// `|S L a - y|^2`
    pub fn data_misfit(&self, a: &[T]) -> T {
        let r = self.design.matvec(a);
        r.iter().zip(&self.y).map(|(&p, &o)| (p - o) * (p - o)).sum()
    }

    /// `|S L a - y|^2 + lambda TV(a)`
    pub fn objective(&self, a: &[T]) -> T {
        self.data_misfit(a) + self.lambda * total_variation(a)
    }

    pub fn residual_norm(&self, a: &[T]) -> T {
        self.data_misfit(a).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by less than this fraction.
    pub relative_tolerance: f64,
    /// Keep the objective value of every iteration in the report.
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            relative_tolerance: 1e-6,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport<T> {
    pub a_hat: AmplitudeVector<T>,
    pub objective: T,
    /// `|S L a_hat - y|_2`, recomputed from `a_hat`.
    pub residual_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// Final step-size constant; a useful hint for a warm-started solve.
    pub lipschitz: T,
    /// Objective after each iteration when requested.
    pub trace: Vec<T>,
}

/// Warm-start state carried between solves of growing problems.
#[derive(Debug, Clone, Copy)]
pub struct WarmStart<'a, T> {
    pub amplitudes: &'a [T],
    pub lipschitz: Option<T>,
}

/// Solves the penalized nonnegative TV problem from a zero start.
pub fn reconstruct<T: Real>(problem: &TvProblem<T>, options: &SolverOptions) -> Result<SolverReport<T>> {
    reconstruct_from(problem, options, None)
}

/// Solves the penalized nonnegative TV problem, optionally warm-started.
pub fn reconstruct_from<T: Real>(
    problem: &TvProblem<T>,
    options: &SolverOptions,
    warm: Option<WarmStart<'_, T>>,
) -> Result<SolverReport<T>> {
    let n = problem.n();
    let rows = problem.rows();
    if rows == 0 {
        return Err(invalid("reconstruction needs at least one projection row"));
    }
    let design = &problem.design;
    let y = &problem.y;
    let lambda = problem.lambda;

    let mut x: Vec<T> = match warm {
        Some(w) if w.amplitudes.len() == n => {
            w.amplitudes.iter().map(|&v| v.max(T::zero())).collect()
        }
        Some(w) => {
            return Err(Error::DimensionMismatch {
                context: "warm start",
                expected: n,
                actual: w.amplitudes.len(),
            })
        }
        None => vec![T::zero(); n],
    };

    let two = T::lit(2.0);
    let tiny = T::min_positive_value().sqrt();
    let power = design.gram_spectral_radius(12);
    let mut lip = (two * power * T::lit(1.02)).max(tiny);
    if let Some(hint) = warm.and_then(|w| w.lipschitz) {
        if hint.is_finite() && hint > lip {
            lip = hint;
        }
    }

    let misfit = |ax: &[T]| -> T { ax.iter().zip(y).map(|(&p, &o)| (p - o) * (p - o)).sum() };

    let mut ax = design.matvec(&x);
    let mut fx = misfit(&ax) + lambda * total_variation(&x);
    let mut x_prev = x.clone();
    let mut ax_prev = ax.clone();
    let mut yk = x.clone();
    let mut ayk = ax.clone();
    let mut t = T::one();

    let mut grad = vec![T::zero(); n];
    let mut resid = vec![T::zero(); rows];
    let mut v = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut az = vec![T::zero(); rows];
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut converged = fx == T::zero();
    let tol = T::lit(options.relative_tolerance);

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        for ((r, &p), &o) in resid.iter_mut().zip(&ayk).zip(y) {
            *r = p - o;
        }
        let f_y = norm_sq(&resid);
        design.matvec_t_into(&resid, &mut grad);
        grad.iter_mut().for_each(|g| *g *= two);

        let f_z = loop {
            for ((vi, &yi), &gi) in v.iter_mut().zip(&yk).zip(&grad) {
                *vi = yi - gi / lip;
            }
            prox_tv_nonneg(&v, lambda / lip, &mut z);
            design.matvec_into(&z, &mut az);
            let f_z = misfit(&az);
            let mut lin = T::zero();
            let mut quad = T::zero();
            for ((&zi, &yi), &gi) in z.iter().zip(&yk).zip(&grad) {
                let d = zi - yi;
                lin += gi * d;
                quad += d * d;
            }
            let bound = f_y + lin + lip / two * quad;
            let slack = T::lit(1e-12) * (T::one() + f_y.abs());
            if f_z <= bound + slack || lip > T::max_value() / T::lit(4.0) {
                break f_z;
            }
            lip *= two;
        };
        let obj_z = f_z + lambda * total_variation(&z);

        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / two;
        let accepted = obj_z <= fx;
        let previous = fx;
        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut ax_prev, &mut ax);
        if accepted {
            x.copy_from_slice(&z);
            ax.copy_from_slice(&az);
            fx = obj_z;
        } else {
            x.copy_from_slice(&x_prev);
            ax.copy_from_slice(&ax_prev);
        }
        if accepted {
            let c1 = t / t_next;
            let c2 = (t - T::one()) / t_next;
            for i in 0..n {
                yk[i] = x[i] + c1 * (z[i] - x[i]) + c2 * (x[i] - x_prev[i]);
            }
            for i in 0..rows {
                ayk[i] = ax[i] + c1 * (az[i] - ax[i]) + c2 * (ax[i] - ax_prev[i]);
            }
            t = t_next;
        } else {
            // Momentum restart.
            yk.copy_from_slice(&x);
            ayk.copy_from_slice(&ax);
            t = T::one();
        }
        if iterations.is_multiple_of(64) {
            design.matvec_into(&yk, &mut ayk);
        }
        if options.record_trace {
            trace.push(fx);
        }
        if fx == T::zero() || (accepted && previous - fx <= tol * fx.abs()) {
            converged = true;
        }
    }

    let objective = problem.objective(&x);
    let residual_norm = problem.residual_norm(&x);
    Ok(SolverReport {
        a_hat: AmplitudeVector::new(x)?,
        objective,
        residual_norm,
        iterations,
        converged,
        lipschitz: lip,
        trace,
    })
}

/// Per-projection dip vector `y`.
///
/// `y_i = reference_i - signal_i` when the projection carries its own
/// reference, else `mean_reference - signal_i`. Negative entries are kept.
pub fn dip_vector_from_counts<T: Real>(records: &[ProjectionRecord<T>], mean_reference: T) -> Result<Vec<T>> {
    if !(mean_reference > T::zero()) {
        return Err(invalid("mean reference power must be positive"));
    }
    Ok(records
        .iter()
        .map(|r| r.reference_count.unwrap_or(mean_reference) - r.signal_count)
        .collect())
}

/// TV weight `scale * sigma_hat * sqrt(rows)`, never below `floor`.
pub fn lambda_for_noise<T: Real>(scale: T, noise_sigma_estimate: T, rows: usize, floor: T) -> T {
    (scale * noise_sigma_estimate * T::from_usize_lossy(rows).sqrt()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::ProjectionRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, rows: usize, n: usize) -> TvProblem<f64> {
        let design = Matrix::from_fn(rows, n, |_, _| rng.random_range(0.0..1.0));
        let y = (0..rows).map(|_| rng.random_range(-0.5..2.0)).collect();
        TvProblem::from_design(design, y, rng.random_range(0.05..1.0)).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = random_problem(&mut rng, 5, 9);
        p.y.iter_mut().for_each(|v| *v = 0.0);
        let r = reconstruct(&p, &SolverOptions::default()).unwrap();
        assert!(r.a_hat.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(r.objective, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn objective_is_monotone_and_iterates_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let p = random_problem(&mut rng, 6, 15);
            let opts = SolverOptions {
                record_trace: true,
                max_iterations: 3000,
                relative_tolerance: 0.0,
            };
            let r = reconstruct(&p, &opts).unwrap();
            for w in r.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
            }
            assert!(r.a_hat.as_slice().iter().all(|&v| v >= 0.0));
            assert!((r.residual_norm - p.residual_norm(r.a_hat.as_slice())).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_problems() {
        let d = Matrix::<f64>::zeros(2, 3);
        assert!(TvProblem::from_design(d.clone(), vec![0.0], 1.0).is_err());
        assert!(TvProblem::from_design(d.clone(), vec![0.0; 2], 0.0).is_err());
        let empty = TvProblem::from_design(Matrix::<f64>::with_cols(3), vec![], 1.0).unwrap();
        assert!(reconstruct(&empty, &SolverOptions::default()).is_err());
        let ok = TvProblem::from_design(d, vec![0.0; 2], 1.0).unwrap();
        let bad = WarmStart { amplitudes: &[0.0], lipschitz: None };
        assert!(reconstruct_from(&ok, &SolverOptions::default(), Some(bad)).is_err());
    }

    #[test]
    fn warm_start_reaches_same_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_problem(&mut rng, 8, 20);
        let opts = SolverOptions { relative_tolerance: 1e-12, max_iterations: 50_000, ..Default::default() };
        let cold = reconstruct(&p, &opts).unwrap();
        let start = vec![1.0; 20];
        let warm = reconstruct_from(&p, &opts, Some(WarmStart { amplitudes: &start, lipschitz: Some(cold.lipschitz) })).unwrap();
        assert!((cold.objective - warm.objective).abs() < 1e-6 * (1.0 + cold.objective));
    }

    #[test]
    fn dip_vector_prefers_paired_reference() {
        let recs = vec![
            ProjectionRecord::new(vec![0], vec![2870.0], 90.0, Some(100.0), 0),
            ProjectionRecord::new(vec![1], vec![2871.0], 95.0, None, 1),
            ProjectionRecord::new(vec![2], vec![2872.0], 100.0, Some(100.0), 2),
        ];
        let y = dip_vector_from_counts(&recs, 98.0).unwrap();
        assert_eq!(y, vec![10.0, 3.0, 0.0]);
        assert!(dip_vector_from_counts(&recs, 0.0).is_err());
    }

    #[test]
    fn f32_solve_runs() {
        let design = Matrix::from_fn(3, 4, |i, j| ((i + 1) * (j + 2)) as f32 / 10.0);
        let p = TvProblem::from_design(design, vec![1.0, 2.0, 3.0], 0.1f32).unwrap();
        let r = reconstruct(&p, &SolverOptions::default()).unwrap();
        assert!(r.objective <= p.objective(&[0.0; 4]));
    }
}
