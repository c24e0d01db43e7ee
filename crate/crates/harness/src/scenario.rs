//! One Monte-Carlo scenario: random spectra, a CS trial and a raster scan on
//! each, summaries per method and point count.

use esr_cs::dictionary::Dictionary;
use esr_cs::protocols::{run_cs_trial, CsConfig, FitOptions, RasterScan, Termination, TrialOutcome};
use esr_cs::spectrum::{amplitude_for_depth, compute_resonances, BiasField, FrequencyWindow, NvConstants};
use esr_cs::{summarize, MetricsSummary, ResonanceSet, SimulatedBackend};
use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::{MethodName, ScenarioConfig};
use crate::error::{HarnessError, Result};
use crate::seeds::{derive, Stream};

/// Direction draws allowed per sample before giving up.
const MAX_DIRECTION_DRAWS: usize = 100_000;

/// Ground truth of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTruth {
    pub field: BiasField<f64>,
    pub resonances: ResonanceSet<f64>,
    /// Directions rejected before this one because resonances collided.
    pub rejected_draws: usize,
}

/// Random direction uniform on the sphere, redrawn while any two resonances
/// sit closer than twice the linewidth.
pub fn draw_truth(config: &ScenarioConfig, sample: usize) -> Result<SampleTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, sample, Stream::Truth));
    let window = window(config)?;
    let w = config.linewidth_mhz;
    let amplitude = amplitude_for_depth(config.dip_depth, w);
    let consts = NvConstants::default();
    for rejected in 0..MAX_DIRECTION_DRAWS {
        let d: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let Ok(field) = BiasField::new(config.field_gauss, d) else {
            continue;
        };
        let resonances = compute_resonances(&field, &consts, &window, w, amplitude)?;
        if resonances.min_separation() >= 2.0 * w {
            if rejected > 0 {
                debug!("sample {sample}: rejected {rejected} field directions with colliding resonances");
            }
            return Ok(SampleTruth {
                field,
                resonances,
                rejected_draws: rejected,
            });
        }
    }
    Err(HarnessError::Config(format!(
        "no field direction in {MAX_DIRECTION_DRAWS} draws keeps resonances {} MHz apart",
        2.0 * w
    )))
}

fn window(config: &ScenarioConfig) -> Result<FrequencyWindow<f64>> {
    Ok(FrequencyWindow::new(config.window_mhz[0], config.window_mhz[1])?)
}

/// Everything the trials of a scenario share.
struct Setup {
    window: FrequencyWindow<f64>,
    grid: Vec<f64>,
    dictionary: Dictionary<f64>,
    cs: CsConfig<f64>,
    fit: FitOptions<f64>,
}

impl Setup {
    fn new(config: &ScenarioConfig) -> Result<Self> {
        let window = window(config)?;
        let grid = window.grid(config.grid_points());
        let w = config.linewidth_mhz;
        let s = &config.cs;
        let margin = s.candidate_margin * w;
        let candidates =
            FrequencyWindow::new(window.lo - margin, window.hi + margin)?.grid_with_spacing(s.candidate_spacing);
        let dictionary = Dictionary::build(&grid, &candidates, &[w])?;
        let mut cs = CsConfig::new(w, config.budget());
        cs.n_initial = s.n_initial;
        cs.tones = config.tones;
        cs.lambda_scale = s.lambda_scale;
        cs.threshold_fraction = s.threshold_fraction;
        cs.convergence_tolerance = s.convergence_tolerance;
        cs.required_consecutive = s.required_consecutive;
        cs.width_tolerance = s.width_tolerance;
        cs.focus_half_width = s.focus_half_width;
        cs.fit_fixed_width = s.fit_fixed_width;
        cs.fit_min_significance = s.fit_min_significance;
        cs.extend_to_max = true;
        cs.report_counts = config.point_counts.clone();
        cs.validate()?;
        Ok(Self {
            window,
            grid,
            dictionary,
            cs,
            fit: FitOptions::for_width(window, w),
        })
    }
}

/// Outcomes of one sample, indexed like `point_counts`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub truth: SampleTruth,
    pub cs: Option<Vec<TrialOutcome<f64>>>,
    pub raster: Option<Vec<TrialOutcome<f64>>>,
}

fn cs_outcomes(config: &ScenarioConfig, setup: &Setup, sample: usize, truth: &ResonanceSet<f64>) -> Vec<TrialOutcome<f64>> {
    let run = || -> Result<_> {
        let mut backend = SimulatedBackend::with_snr(
            truth.clone(),
            setup.window,
            &setup.grid,
            config.reference_counts,
            config.snr,
            derive(config.seed, sample, Stream::CsNoise),
        )?;
        let seed = derive(config.seed, sample, Stream::CsProjections);
        Ok(run_cs_trial(&mut backend, &setup.dictionary, &setup.cs, seed, Some(truth))?)
    };
    match run() {
        Ok(trial) => {
            let converged_at = (trial.outcome.terminated_by == Termination::Converged)
                .then_some(trial.outcome.measurements_used);
            trial
                .snapshots
                .into_iter()
                .map(|s| {
                    let term = match converged_at {
                        Some(c) if c <= s.measurements => Termination::Converged,
                        _ => Termination::MaxMeasurements,
                    };
                    TrialOutcome::score(s.peaks, s.measurements, term, setup.cs.expected_peaks, Some(truth))
                })
                .collect()
        }
        Err(e) => {
            debug!("sample {sample}: cs trial failed: {e}");
            config
                .point_counts
                .iter()
                .map(|&n| TrialOutcome::failure(n, Termination::MaxMeasurements))
                .collect()
        }
    }
}

fn raster_outcomes(
    config: &ScenarioConfig,
    setup: &Setup,
    sample: usize,
    truth: &ResonanceSet<f64>,
) -> Result<Vec<TrialOutcome<f64>>> {
    let mut backend = SimulatedBackend::with_snr(
        truth.clone(),
        setup.window,
        &setup.grid,
        config.reference_counts,
        config.snr,
        derive(config.seed, sample, Stream::RasterNoise),
    )?;
    // One full sweep; smaller point counts are uniform sub-samples of it.
    let scan = RasterScan::measure(&mut backend, &setup.grid)?;
    config
        .point_counts
        .iter()
        .map(|&n| Ok(scan.outcome(n, esr_cs::spectrum::NV_RESONANCES, &setup.fit, Some(truth))?))
        .collect()
}

fn run_sample(config: &ScenarioConfig, setup: &Setup, sample: usize) -> Result<SampleResult> {
    let truth = draw_truth(config, sample)?;
    let cs = config
        .method
        .runs_cs()
        .then(|| cs_outcomes(config, setup, sample, &truth.resonances));
    let raster = if config.method.runs_raster() {
        Some(raster_outcomes(config, setup, sample, &truth.resonances)?)
    } else {
        None
    };
    Ok(SampleResult { truth, cs, raster })
}

/// Summary of one method at one point count.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: MethodName,
    pub n_points: usize,
    pub summary: MetricsSummary<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub samples: Vec<SampleResult>,
    /// CS rows first, each method by increasing point count.
    pub summaries: Vec<MethodSummary>,
}

impl ScenarioResult {
    pub fn summary(&self, method: MethodName, n_points: usize) -> Option<&MetricsSummary<f64>> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.n_points == n_points)
            .map(|s| &s.summary)
    }
}

/// Runs every sample of `config`, in parallel when `parallel` is set.
///
/// Samples are merged by index, so both modes give identical results.
pub fn run_scenario(config: &ScenarioConfig, parallel: bool) -> Result<ScenarioResult> {
    config.validate()?;
    let setup = Setup::new(config)?;
    let samples: Vec<SampleResult> = if parallel {
        (0..config.n_samples)
            .into_par_iter()
            .map(|i| run_sample(config, &setup, i))
            .collect::<Result<_>>()?
    } else {
        (0..config.n_samples)
            .map(|i| run_sample(config, &setup, i))
            .collect::<Result<_>>()?
    };
    let rejected: usize = samples.iter().map(|s| s.truth.rejected_draws).sum();
    if rejected > 0 {
        log::info!(
            "{}: rejected {rejected} field directions with resonances closer than {} MHz",
            config.name,
            2.0 * config.linewidth_mhz
        );
    }

    let gamma = NvConstants::<f64>::default().gyromagnetic_ratio;
    let mut summaries = Vec::new();
    for method in config.method.names() {
        for (k, &n) in config.point_counts.iter().enumerate() {
            let outcomes: Vec<TrialOutcome<f64>> = samples
                .iter()
                .map(|s| {
                    let per_count = match method {
                        MethodName::Cs => s.cs.as_ref(),
                        MethodName::Raster => s.raster.as_ref(),
                    };
                    per_count.expect("method ran")[k].clone()
                })
                .collect();
            summaries.push(MethodSummary {
                method,
                n_points: n,
                summary: summarize(&outcomes, gamma)?,
            });
        }
    }
    Ok(ScenarioResult { samples, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{scenario_preset, Method};

    fn small() -> ScenarioConfig {
        let mut c = scenario_preset("high-field").unwrap();
        c.n_samples = 2;
        c.point_counts = vec![100, 150];
        c
    }

    #[test]
    fn truths_are_separated_and_reproducible() {
        let c = small();
        for i in 0..20 {
            let t = draw_truth(&c, i).unwrap();
            assert!(t.resonances.min_separation() >= 30.0);
            assert_eq!(t, draw_truth(&c, i).unwrap());
            assert!((t.field.magnitude() - 100.0).abs() < 1e-12);
        }
        assert_ne!(draw_truth(&c, 0).unwrap(), draw_truth(&c, 1).unwrap());
    }

    #[test]
    fn noiseless_single_sample_cs_succeeds() {
        let mut c = small();
        c.n_samples = 1;
        c.snr = f64::INFINITY;
        c.method = Method::Cs;
        let r = run_scenario(&c, false).unwrap();
        assert_eq!(r.summaries.len(), 2);
        let s = r.summary(MethodName::Cs, 150).unwrap();
        assert_eq!(s.success_probability, 1.0);
        assert!(r.summary(MethodName::Raster, 150).is_none());
    }

    #[test]
    fn parallel_equals_serial() {
        let mut c = small();
        c.point_counts = vec![30, 60];
        c.n_samples = 3;
        assert_eq!(run_scenario(&c, true).unwrap(), run_scenario(&c, false).unwrap());
    }
}
