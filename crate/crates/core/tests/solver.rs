use std::collections::BTreeSet;

use esr_cs::dictionary::{draw_projection, Dictionary, SamplingMatrix};
use esr_cs::solver::{oracle_minimize, reconstruct, SolverOptions, TvProblem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight() -> SolverOptions {
    SolverOptions {
        max_iterations: 200_000,
        relative_tolerance: 1e-15,
        record_trace: false,
    }
}

/// Small random instance: `m` grid points, `n` candidates, a sparse nonnegative
/// truth plus noise.
fn instance(seed: u64, m: usize, n: usize) -> TvProblem<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Vec<f64> = (0..m).map(|i| 10.0 * i as f64).collect();
    let span = 10.0 * (m - 1) as f64;
    let candidates: Vec<f64> = (0..n).map(|k| span * k as f64 / (n - 1) as f64).collect();
    let dict = Dictionary::build(&grid, &candidates, &[rng.random_range(8.0..25.0)]).unwrap();
    let tones = rng.random_range(1..=m.min(4));
    let rows = rng.random_range(3..=10);
    let mut sampling = SamplingMatrix::new(m, tones).unwrap();
    for _ in 0..rows {
        sampling
            .push(draw_projection(&mut rng, m, tones, &BTreeSet::new()).unwrap())
            .unwrap();
    }
    let mut a = vec![0.0; n];
    for _ in 0..rng.random_range(1..=3) {
        a[rng.random_range(0..n)] += rng.random_range(5.0..40.0);
    }
    let mut y = Vec::with_capacity(rows);
    for i in 0..rows {
        let row: Vec<f64> = sampling.dense_row(i);
        let clean: f64 = (0..n)
            .map(|k| a[k] * (0..m).map(|j| row[j] * dict.matrix().get(j, k)).sum::<f64>())
            .sum();
        y.push(clean + rng.random_range(-0.05..0.05));
    }
    let lambda = rng.random_range(0.01..0.5);
    TvProblem::from_sampling(&sampling, &dict, y, lambda).unwrap()
}

#[test]
fn matches_exhaustive_oracle() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let m = rng.random_range(2..=8);
        let n = rng.random_range(2..=12);
        let p = instance(seed, m, n);
        let fast = reconstruct(&p, &tight()).unwrap();
        let exact = oracle_minimize(&p).unwrap();
        let gap = fast.objective - exact.objective;
        assert!(
            gap.abs() <= 1e-6 * exact.objective.max(1.0),
            "seed {seed}: solver {} oracle {}",
            fast.objective,
            exact.objective
        );
    }
}

#[test]
fn grid_scan_never_beats_oracle() {
    // Independent check of the oracle: a brute grid over two amplitudes.
    let dict = Dictionary::build(&[0.0, 10.0, 20.0], &[0.0, 20.0], &[10.0]).unwrap();
    let mut sampling = SamplingMatrix::new(3, 1).unwrap();
    for j in 0..3 {
        sampling.push(vec![j]).unwrap();
    }
    let p = TvProblem::from_sampling(&sampling, &dict, vec![1.0, 0.4, 0.7], 0.05).unwrap();
    let exact = oracle_minimize(&p).unwrap();
    let mut best = f64::INFINITY;
    for i in 0..=400 {
        for j in 0..=400 {
            best = best.min(p.objective(&[i as f64 * 0.05, j as f64 * 0.05]));
        }
    }
    assert!(exact.objective <= best + 1e-12);
    assert!(best - exact.objective < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solution_is_nonnegative_and_objective_monotone(seed in 0u64..10_000, m in 3usize..=8, n in 3usize..=12) {
        let p = instance(seed, m, n);
        let opts = SolverOptions { record_trace: true, ..tight() };
        let r = reconstruct(&p, &opts).unwrap();
        prop_assert!(r.a_hat.as_slice().iter().all(|&v| v >= 0.0));
        for w in r.trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn scaling_data_and_lambda_scales_solution(seed in 0u64..10_000, c in 0.1f64..10.0) {
        let p = instance(seed, 6, 10);
        let scaled = TvProblem::from_design(
            p.design().clone(),
            p.y().iter().map(|v| v * c).collect(),
            p.lambda() * c,
        )
        .unwrap();
        let base = oracle_minimize(&p).unwrap();
        let big = oracle_minimize(&scaled).unwrap();
        prop_assert!((big.objective - c * c * base.objective).abs() <= 1e-8 * big.objective.max(1.0));
        let fast = reconstruct(&scaled, &tight()).unwrap();
        prop_assert!((fast.objective - big.objective).abs() <= 1e-6 * big.objective.max(1.0));
    }
}

#[test]
fn refined_dictionary_fits_at_least_as_well() {
    use esr_cs::spectrum::{synthesize_spectrum, FrequencyWindow};
    use esr_cs::{PeakList, ResonanceSet};

    let window = FrequencyWindow::new(2700.0, 3000.0).unwrap();
    let grid = window.grid(151);
    let centers = vec![2751.3, 2838.7, 2902.2, 2961.9];
    let truth = ResonanceSet::new(centers.clone(), vec![12.0; 4], vec![150.0; 4]).unwrap();
    let spectrum = synthesize_spectrum(&truth, &grid, 1000.0, f64::INFINITY, 0).unwrap();
    let y: Vec<f64> = spectrum.clean_counts.iter().map(|c| 1000.0 - c).collect();
    let mut sampling = SamplingMatrix::new(grid.len(), 1).unwrap();
    for j in 0..grid.len() {
        sampling.push(vec![j]).unwrap();
    }
    let coarse = Dictionary::build(&grid, &window.grid_with_spacing(4.0), &[12.0]).unwrap();
    let refined = coarse.refine(&PeakList::new(centers, vec![12.0; 4]).unwrap()).unwrap();
    let opts = SolverOptions {
        max_iterations: 20_000,
        ..SolverOptions::default()
    };
    let residual = |d: &Dictionary<f64>| {
        let p = TvProblem::from_sampling(&sampling, d, y.clone(), 1e-3).unwrap();
        reconstruct(&p, &opts).unwrap().residual_norm
    };
    let (rc, rr) = (residual(&coarse), residual(&refined));
    assert!(rr <= rc, "refined {rr} coarse {rc}");
}
