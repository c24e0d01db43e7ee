//! Exhaustive global minimizer for small TV problems, used to check [`super::reconstruct`].
//!
//! Every nonnegative vector has a canonical structure: maximal runs of equal
//! values, each run either zero or strictly positive, with a known sign for the
//! jump between consecutive positive runs. With the structure fixed the
//! objective is a smooth quadratic in the run values, so its minimizer solves
//! a small linear system. Enumerating all structures (and jump signs) and
//! keeping the best feasible stationary point yields the global minimum.
//!
//! A ridge of `mu |a|^2` with tiny `mu` makes every restricted system
//! nonsingular; it moves the optimum value by at most `mu |a*|^2`.

use crate::dictionary::AmplitudeVector;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, cholesky_solve_in_place};
use crate::scalar::{dot, Real};

use super::{SolverReport, TvProblem};

/// Largest candidate count the enumeration accepts.
pub const ORACLE_MAX_N: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Zero,
    Free,
}

#[derive(Clone, Copy)]
struct Segment {
    start: usize,
    end: usize,
    kind: Kind,
}

struct Search<'a, T> {
    problem: &'a TvProblem<T>,
    /// prefix[i] = sum of design columns 0..i, stored as `rows` values each
    prefix: Vec<Vec<T>>,
    ridge: T,
    best: Option<(T, Vec<T>)>,
    evaluated: usize,
    segments: Vec<Segment>,
}

/// Global minimizer of `|A a - y|^2 + lambda TV(a)` over `a >= 0` for `N <= 16`.
pub fn oracle_minimize<T: Real>(problem: &TvProblem<T>) -> Result<SolverReport<T>> {
    let n = problem.n();
    if n > ORACLE_MAX_N {
        return Err(Error::TooLarge {
            size: n,
            max: ORACLE_MAX_N,
        });
    }
    let rows = problem.rows();
    let design = problem.design();
    let mut prefix = vec![vec![T::zero(); rows]; n + 1];
    for i in 0..n {
        for r in 0..rows {
            prefix[i + 1][r] = prefix[i][r] + design.get(r, i);
        }
    }
    let col_scale = (0..n)
        .map(|i| {
            let c = design.column(i);
            dot(&c, &c)
        })
        .fold(T::zero(), |m, v| m.max(v));
    let ridge = (col_scale * T::lit(1e-11)).max(T::min_positive_value().sqrt());

    let mut search = Search {
        problem,
        prefix,
        ridge,
        best: None,
        evaluated: 0,
        segments: Vec::with_capacity(n),
    };
    // The zero vector is always feasible.
    search.consider(vec![T::zero(); n]);
    search.extend(0);

    let (objective, a) = search.best.expect("zero vector was considered");
    let residual_norm = problem.residual_norm(&a);
    Ok(SolverReport {
        a_hat: AmplitudeVector::new(a)?,
        objective,
        residual_norm,
        iterations: search.evaluated,
        converged: true,
        lipschitz: T::zero(),
        trace: Vec::new(),
    })
}

impl<T: Real> Search<'_, T> {
    fn extend(&mut self, start: usize) {
        let n = self.problem.n();
        if start == n {
            self.solve_structure();
            return;
        }
        let prev = self.segments.last().map(|s| s.kind);
        for end in start..n {
            for kind in [Kind::Zero, Kind::Free] {
                if kind == Kind::Zero && prev == Some(Kind::Zero) {
                    continue;
                }
                self.segments.push(Segment { start, end, kind });
                self.extend(end + 1);
                self.segments.pop();
            }
        }
    }

    fn segment_column(&self, s: &Segment) -> Vec<T> {
        self.prefix[s.end + 1]
            .iter()
            .zip(&self.prefix[s.start])
            .map(|(&a, &b)| a - b)
            .collect()
    }

    fn solve_structure(&mut self) {
        let free: Vec<Segment> = self
            .segments
            .iter()
            .copied()
            .filter(|s| s.kind == Kind::Free)
            .collect();
        let k = free.len();
        if k == 0 {
            return;
        }
        let cols: Vec<Vec<T>> = free.iter().map(|s| self.segment_column(s)).collect();
        let y = self.problem.y();
        let mut h = vec![T::zero(); k * k];
        for i in 0..k {
            for j in i..k {
                let v = dot(&cols[i], &cols[j]);
                h[i * k + j] = v;
                h[j * k + i] = v;
            }
            h[i * k + i] += self.ridge * T::from_usize_lossy(free[i].end - free[i].start + 1);
        }
        if cholesky_in_place(&mut h, k).is_err() {
            return;
        }
        let b: Vec<T> = cols.iter().map(|c| dot(c, y)).collect();

        // Fixed TV coefficients from jumps touching zero runs; free-free jumps get enumerated signs.
        let mut fixed_w = vec![T::zero(); k];
        let mut free_pairs: Vec<(usize, usize)> = Vec::new();
        let mut free_idx = 0usize;
        let mut prev: Option<(Kind, usize)> = None;
        for s in &self.segments {
            let cur = match s.kind {
                Kind::Free => {
                    let idx = free_idx;
                    free_idx += 1;
                    (Kind::Free, idx)
                }
                Kind::Zero => (Kind::Zero, usize::MAX),
            };
            match (prev, cur) {
                (Some((Kind::Free, p)), (Kind::Free, q)) => free_pairs.push((p, q)),
                (Some((Kind::Free, p)), (Kind::Zero, _)) => fixed_w[p] += T::one(),
                (Some((Kind::Zero, _)), (Kind::Free, q)) => fixed_w[q] += T::one(),
                _ => {}
            }
            prev = Some(cur);
        }

        let half_lambda = self.problem.lambda() / T::lit(2.0);
        let patterns = 1usize << free_pairs.len();
        let n = self.problem.n();
        for mask in 0..patterns {
            let mut w = fixed_w.clone();
            for (bit, &(p, q)) in free_pairs.iter().enumerate() {
                let s = if mask & (1 << bit) != 0 { T::one() } else { -T::one() };
                w[q] += s;
                w[p] -= s;
            }
            let mut c: Vec<T> = b.iter().zip(&w).map(|(&bi, &wi)| bi - half_lambda * wi).collect();
            cholesky_solve_in_place(&h, k, &mut c);
            let scale = c.iter().fold(T::one(), |m, v| m.max(v.abs()));
            if c.iter().any(|&v| !v.is_finite() || v < -T::lit(1e-9) * scale) {
                continue;
            }
            let mut a = vec![T::zero(); n];
            for (seg, &value) in free.iter().zip(&c) {
                let value = value.max(T::zero());
                a[seg.start..=seg.end].iter_mut().for_each(|x| *x = value);
            }
            self.consider(a);
        }
    }

    fn consider(&mut self, a: Vec<T>) {
        self.evaluated += 1;
        let f = self.problem.objective(&a);
        match &self.best {
            Some((best, _)) if *best <= f => {}
            _ => self.best = Some((f, a)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn scalar_case_matches_closed_form() {
        // |c a - y|^2 over a >= 0: a* = max(y / c, 0).
        for (c, y) in [(2.0f64, 3.0), (0.5, -1.0), (1.5, 0.0)] {
            let p = TvProblem::from_design(Matrix::from_row_major(1, 1, vec![c]).unwrap(), vec![y], 1.0).unwrap();
            let r = oracle_minimize(&p).unwrap();
            let expected = (y / c).max(0.0);
            assert!((r.a_hat.as_slice()[0] - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let p = TvProblem::from_design(Matrix::from_fn(3, 5, |i, j| (i + j + 1) as f64), vec![0.0; 3], 0.3).unwrap();
        let r = oracle_minimize(&p).unwrap();
        assert!(r.a_hat.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn rejects_large_problems() {
        let p = TvProblem::from_design(Matrix::<f64>::zeros(1, 17), vec![0.0], 1.0).unwrap();
        assert!(matches!(oracle_minimize(&p), Err(Error::TooLarge { size: 17, max: 16 })));
    }
}
