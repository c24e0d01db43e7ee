use esr_cs::acquisition::SimulatedBackend;
use esr_cs::dictionary::Dictionary;
use esr_cs::protocols::{
    fit_lorentzians, run_cs_trial, ConvergenceState, CsConfig, FitOptions, RasterScan, Termination,
};
use esr_cs::spectrum::{amplitude_for_depth, compute_resonances, BiasField, FrequencyWindow, NvConstants};
use esr_cs::{PeakList, ResonanceSet};
use proptest::prelude::*;

const WIDTH: f64 = 15.0;

struct Scenario {
    truth: ResonanceSet<f64>,
    window: FrequencyWindow<f64>,
    grid: Vec<f64>,
    dict: Dictionary<f64>,
}

fn scenario(direction: [f64; 3]) -> Scenario {
    let window = FrequencyWindow::centered(2870.0, 650.0).unwrap();
    let f = BiasField::new(100.0, direction).unwrap();
    let amp = amplitude_for_depth(10.0, WIDTH);
    let truth = compute_resonances(&f, &NvConstants::default(), &window, WIDTH, amp).unwrap();
    assert!(truth.min_separation() >= 2.0 * WIDTH);
    let grid = window.grid(651);
    let candidates = FrequencyWindow::new(window.lo - 2.0 * WIDTH, window.hi + 2.0 * WIDTH)
        .unwrap()
        .grid_with_spacing(1.0);
    let dict = Dictionary::build(&grid, &candidates, &[WIDTH]).unwrap();
    Scenario {
        truth,
        window,
        grid,
        dict,
    }
}

const DIRECTION: [f64; 3] = [0.21, 0.47, 0.86];

#[test]
fn noiseless_cs_recovers_all_peaks() {
    let s = scenario(DIRECTION);
    let mut b = SimulatedBackend::new(s.truth.clone(), s.window, 1000.0, 0.0, 1).unwrap();
    let trial = run_cs_trial(&mut b, &s.dict, &CsConfig::new(WIDTH, 150), 7, Some(&s.truth)).unwrap();
    let o = trial.outcome;
    assert!(o.success);
    assert_eq!(o.terminated_by, Termination::Converged);
    assert!(o.measurements_used <= 150);
    assert!(o.per_peak_abs_error.unwrap().iter().all(|&e| e <= 1.0));
    assert!(trial.refined_at.is_some());
}

#[test]
fn budget_of_initial_phase_stops_at_cap() {
    let s = scenario(DIRECTION);
    let mut b = SimulatedBackend::with_snr(s.truth.clone(), s.window, &s.grid, 1000.0, 3.0, 1).unwrap();
    let config = CsConfig::new(WIDTH, 10);
    let trial = run_cs_trial(&mut b, &s.dict, &config, 7, Some(&s.truth)).unwrap();
    assert_eq!(trial.outcome.terminated_by, Termination::MaxMeasurements);
    assert_eq!(trial.outcome.measurements_used, 10);
    assert_eq!(trial.projections, 10);
}

#[test]
fn equal_seeds_give_equal_trials() {
    let s = scenario(DIRECTION);
    let mut config = CsConfig::new(WIDTH, 120);
    config.extend_to_max = true;
    config.report_counts = vec![50, 100, 120];
    let run = || {
        let mut b = SimulatedBackend::with_snr(s.truth.clone(), s.window, &s.grid, 1000.0, 3.0, 4).unwrap();
        run_cs_trial(&mut b, &s.dict, &config, 9, Some(&s.truth)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.outcome, b.outcome);
    assert_eq!(a.snapshots, b.snapshots);
    assert_eq!(a.snapshots.len(), 3);
}

#[test]
fn noiseless_full_raster_is_exact() {
    let s = scenario(DIRECTION);
    let mut b = SimulatedBackend::new(s.truth.clone(), s.window, 1000.0, 0.0, 1).unwrap();
    let scan = RasterScan::measure(&mut b, &s.grid).unwrap();
    let o = scan
        .outcome(651, 8, &FitOptions::for_width(s.window, WIDTH), Some(&s.truth))
        .unwrap();
    assert!(o.success);
    assert!(o.per_peak_abs_error.unwrap().iter().all(|&e| e <= 0.01));
}

#[test]
fn eight_peaks_are_never_fitted_to_seven() {
    let s = scenario(DIRECTION);
    let c = s.truth.centers();
    let seven = ResonanceSet::new(c[..7].to_vec(), vec![WIDTH; 7], s.truth.amplitudes()[..7].to_vec()).unwrap();
    // Two starting peaks on one resonance.
    let mut init = c.to_vec();
    init[7] = c[6] + 0.5;
    let init = PeakList::new(init, vec![WIDTH; 8]).unwrap();
    let options = FitOptions::for_width(s.window, WIDTH);
    for (snr, seed) in [(f64::INFINITY, 1), (10.0, 2), (3.0, 3)] {
        let mut b = SimulatedBackend::with_snr(seven.clone(), s.window, &s.grid, 1000.0, snr, seed).unwrap();
        let scan = RasterScan::measure(&mut b, &s.grid).unwrap();
        let r = fit_lorentzians(&scan.grid, &scan.counts, 8, Some(&init), &options);
        assert!(r.is_err(), "snr {snr}: {r:?}");
        let r = fit_lorentzians(&scan.grid, &scan.counts, 8, None, &options);
        assert!(r.is_err(), "snr {snr}, automatic start: {r:?}");
    }
}

/// Independent statement of the stopping rule: the current run starts after the
/// last list with the wrong count or the last list that disagreed with one of the
/// `required` lists before it inside the run.
fn reference_converged(lists: &[Option<Vec<f64>>], tol: f64, required: usize) -> Vec<bool> {
    let mut start = 0usize;
    let mut out = Vec::new();
    for i in 0..lists.len() {
        match &lists[i] {
            None => start = i + 1,
            Some(cur) => {
                let from = start.max(i.saturating_sub(required));
                let disagree = (from..i).any(|j| {
                    let prev = lists[j].as_ref().unwrap();
                    prev.iter().zip(cur).any(|(a, b)| (a - b).abs() > tol)
                });
                if disagree {
                    start = i;
                }
            }
        }
        out.push(lists[i].is_some() && i + 1 - start >= required);
    }
    out
}

proptest! {
    #[test]
    fn convergence_matches_reference_rule(
        steps in prop::collection::vec(prop::option::weighted(0.85, prop::collection::vec(-1.5f64..1.5, 8)), 1..40),
        required in 1usize..6,
    ) {
        let base: Vec<f64> = (0..8).map(|i| 2600.0 + 60.0 * i as f64).collect();
        let lists: Vec<Option<Vec<f64>>> = steps
            .iter()
            .map(|s| s.as_ref().map(|d| base.iter().zip(d).map(|(b, x)| b + x).collect()))
            .collect();
        let expected = reference_converged(&lists, 2.0, required);
        let mut state = ConvergenceState::new(2.0, required, 8);
        for (l, &want) in lists.iter().zip(&expected) {
            let peaks = match l {
                Some(c) => PeakList::new(c.clone(), vec![WIDTH; 8]).unwrap(),
                None => PeakList::new(base[..7].to_vec(), vec![WIDTH; 7]).unwrap(),
            };
            prop_assert_eq!(state.update(&peaks), want);
        }
    }
}
