//! Solver self-check against the exhaustive oracle on small random problems.

use std::collections::BTreeSet;

use esr_cs::dictionary::{draw_projection, Dictionary, SamplingMatrix};
use esr_cs::solver::{oracle_minimize, reconstruct, SolverOptions, TvProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::seeds::mix;

/// Largest grid and candidate counts drawn.
pub const MAX_GRID: usize = 8;
pub const MAX_CANDIDATES: usize = 12;

/// Options tight enough that the iterative solver settles to the optimum.
pub fn tight_solver() -> SolverOptions {
    SolverOptions {
        max_iterations: 200_000,
        relative_tolerance: 1e-15,
        record_trace: false,
    }
}

/// A random instance with `M <= 8` grid points and `N <= 12` candidates:
/// sparse nonnegative truth, 1 to 4 tones per row, small noise, random lambda.
pub fn random_problem(seed: u64) -> Result<TvProblem<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed));
    let m = rng.random_range(2..=MAX_GRID);
    let n = rng.random_range(2..=MAX_CANDIDATES);
    let grid: Vec<f64> = (0..m).map(|i| 10.0 * i as f64).collect();
    let span = 10.0 * (m - 1) as f64;
    let candidates: Vec<f64> = (0..n).map(|k| span * k as f64 / (n - 1) as f64).collect();
    let dict = Dictionary::build(&grid, &candidates, &[rng.random_range(8.0..25.0)])?;
    let tones = rng.random_range(1..=m.min(4));
    let rows = rng.random_range(3..=10);
    let mut sampling = SamplingMatrix::new(m, tones)?;
    for _ in 0..rows {
        sampling.push(draw_projection(&mut rng, m, tones, &BTreeSet::new())?)?;
    }
    let mut a = vec![0.0; n];
    for _ in 0..rng.random_range(1..=3) {
        a[rng.random_range(0..n)] += rng.random_range(5.0..40.0);
    }
    let design = TvProblem::from_sampling(&sampling, &dict, vec![0.0; rows], 1.0)?;
    let clean = design.design().matvec(&a);
    let y = clean.iter().map(|c| c + rng.random_range(-0.05..0.05)).collect();
    Ok(TvProblem::from_design(design.design().clone(), y, rng.random_range(0.01..0.5))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub instances: usize,
    /// Largest `|solver - oracle| / max(1, oracle)` over the instances.
    pub worst_relative_gap: f64,
}

pub fn oracle_check(seed: u64, instances: usize) -> Result<OracleCheck> {
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let p = random_problem(seed.wrapping_add(i as u64))?;
        let fast = reconstruct(&p, &tight_solver())?;
        let exact = oracle_minimize(&p)?;
        worst = worst.max((fast.objective - exact.objective).abs() / exact.objective.max(1.0));
    }
    Ok(OracleCheck {
        instances,
        worst_relative_gap: worst,
    })
}
