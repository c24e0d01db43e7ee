//! Adaptive compressed-sensing acquisition.
//!
//! After a short initial phase of random projections (which also estimates
//! the reference level and the count noise), every new projection is followed
//! by a TV reconstruction and peak detection. Once the expected number of
//! peaks has been found consistently, the dictionary is refined around them
//! and the loop continues on the refined dictionary until the peaks are
//! consistent again with plausible widths, or the measurement budget runs out.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{measure_projection, run_initial_phase, MeasurementBackend, ProjectionRecord};
use crate::dictionary::{draw_projection, Dictionary, RefineOptions, MAX_TONES};
use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::peaks::PeakList;
use crate::scalar::Real;
use crate::solver::{lambda_for_noise, reconstruct_from, SolverOptions, TvProblem, WarmStart};
use crate::spectrum::{FrequencyWindow, ResonanceSet, NV_RESONANCES};

use super::convergence::ConvergenceState;
use super::detect::{detect_clusters, Cluster};
use super::fit::{fit_observations, FitOptions, FitStart, LorentzianFit, Observation};
use super::{Termination, TrialOutcome};

/// How peak centers are read off the current data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenterEstimator {
    /// Cluster centroids of the reconstruction.
    Reconstruction,
    /// A least-squares fit of the projection model to the raw counts, seeded
    /// by the clusters. The stopping rule still follows the centroids while
    /// the fit fails, but nothing is reported until a fit succeeds.
    Fit,
}

/// How the TV weight follows the noise estimate `sigma_hat`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaRule {
    /// `lambda = scale * sigma_hat * sqrt(rows)`.
    PerRow,
    /// `lambda = scale * sigma_hat * max_k |A e_k|`: the same growth with the
    /// row count, but in the units of the data gradient, so one scale fits
    /// every window, width and tone count.
    ColumnNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsConfig<T> {
    pub n_initial: usize,
    /// Simultaneous tones per projection.
    pub tones: usize,
    /// Hard cap on projections, initial phase included.
    pub max_measurements: usize,
    pub expected_peaks: usize,
    pub threshold_fraction: T,
    /// MHz
    pub convergence_tolerance: T,
    pub required_consecutive: usize,
    /// Linewidth expected from the sample, MHz.
    pub characteristic_width: T,
    /// Accepted relative deviation of the estimated widths at termination.
    pub width_tolerance: T,
    pub lambda_rule: LambdaRule,
    pub lambda_scale: T,
    /// Lower bound on lambda as a fraction of `max |A^T y|`; only matters without noise.
    pub lambda_floor_fraction: T,
    /// A reference count is taken with every k-th projection (the initial phase always takes one).
    pub reference_every: usize,
    /// Use each projection's own reference in the dip vector instead of the running mean.
    pub paired_reference: bool,
    pub estimator: CenterEstimator,
    /// Fit centers and amplitudes at the characteristic width; widths are
    /// freed only for the termination check.
    pub fit_fixed_width: bool,
    /// Amplitude over standard error a fitted dip needs. Higher than a single
    /// test would need, since the fit can place a dip anywhere in the window.
    pub fit_min_significance: T,
    /// After refinement, draw tones only within this many widths of a converged peak.
    pub focus_half_width: Option<T>,
    /// Keep measuring up to `max_measurements` after termination (for statistics at `report_counts`).
    pub extend_to_max: bool,
    /// Projection counts at which the current estimate is recorded.
    pub report_counts: Vec<usize>,
    pub solver: SolverOptions,
    pub refine: RefineOptions,
}

impl<T: Real> CsConfig<T> {
    pub fn new(characteristic_width: T, max_measurements: usize) -> Self {
        Self {
            n_initial: 10,
            tones: 3,
            max_measurements,
            expected_peaks: NV_RESONANCES,
            threshold_fraction: T::lit(0.1),
            convergence_tolerance: T::lit(2.0),
            required_consecutive: 4,
            characteristic_width,
            width_tolerance: T::lit(0.5),
            lambda_rule: LambdaRule::ColumnNorm,
            lambda_scale: T::lit(4.0),
            lambda_floor_fraction: T::lit(1e-4),
            reference_every: 1,
            paired_reference: true,
            estimator: CenterEstimator::Fit,
            fit_fixed_width: true,
            fit_min_significance: T::lit(4.0),
            focus_half_width: None,
            extend_to_max: false,
            report_counts: Vec::new(),
            solver: SolverOptions::default(),
            refine: RefineOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_initial < 4 {
            return Err(invalid("the initial phase needs at least 4 projections"));
        }
        if self.max_measurements < self.n_initial {
            return Err(invalid("max_measurements must cover the initial phase"));
        }
        if self.tones == 0 || self.tones > MAX_TONES {
            return Err(invalid(format!("tones per projection must be in 1..={MAX_TONES}")));
        }
        if !(self.characteristic_width > T::zero()) || !(self.width_tolerance > T::zero()) {
            return Err(invalid("characteristic width and width tolerance must be positive"));
        }
        if !(self.lambda_scale >= T::zero()) || !(self.lambda_floor_fraction > T::zero()) {
            return Err(invalid("lambda scale must be nonnegative and the floor positive"));
        }
        if !(self.threshold_fraction > T::zero() && self.threshold_fraction < T::one()) {
            return Err(invalid("threshold fraction must lie in (0, 1)"));
        }
        if self.reference_every == 0 {
            return Err(invalid("reference_every must be at least 1"));
        }
        if !(self.fit_min_significance >= T::zero()) {
            return Err(invalid("fit significance must be nonnegative"));
        }
        Ok(())
    }
}

/// Estimate recorded at a requested projection count.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub measurements: usize,
    pub peaks: PeakList<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsTrial<T> {
    pub outcome: TrialOutcome<T>,
    pub snapshots: Vec<Snapshot<T>>,
    /// Projection count at which the dictionary was refined.
    pub refined_at: Option<usize>,
    /// Projections actually measured (more than `outcome.measurements_used` when extended).
    pub projections: usize,
    pub solves: usize,
}

struct Reconstruction<T> {
    dict: Dictionary<T>,
    problem: TvProblem<T>,
    warm: Option<(Vec<T>, T)>,
    solves: usize,
}

impl<T: Real> Reconstruction<T> {
    fn new(dict: Dictionary<T>, records: &[ProjectionRecord<T>]) -> Result<Self> {
        let mut design = Matrix::with_cols(dict.n());
        for r in records {
            design.push_row(&dict.design_row(&r.tone_indices)?)?;
        }
        let rows = design.rows();
        Ok(Self {
            problem: TvProblem::from_design(design, vec![T::zero(); rows], T::one())?,
            dict,
            warm: None,
            solves: 0,
        })
    }

    fn push(&mut self, record: &ProjectionRecord<T>) -> Result<()> {
        let row = self.dict.design_row(&record.tone_indices)?;
        self.problem.push_row(&row, T::zero())
    }

    fn max_column_norm(&self) -> T {
        let design = self.problem.design();
        let mut sq = vec![T::zero(); design.cols()];
        for r in 0..design.rows() {
            for (s, &v) in sq.iter_mut().zip(design.row(r)) {
                *s += v * v;
            }
        }
        sq.into_iter().fold(T::zero(), |m, v| m.max(v)).sqrt()
    }

    fn solve(&mut self, y: Vec<T>, config: &CsConfig<T>, sigma_hat: T) -> Result<Vec<Cluster<T>>> {
        let aty = self.problem.design().matvec_t(&y);
        let scale = aty.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let floor = (config.lambda_floor_fraction * scale).max(T::min_positive_value().sqrt());
        let lambda = match config.lambda_rule {
            LambdaRule::PerRow => lambda_for_noise(config.lambda_scale, sigma_hat, self.problem.rows(), floor),
            LambdaRule::ColumnNorm => {
                let norm = self.max_column_norm();
                (config.lambda_scale * sigma_hat * norm).max(floor)
            }
        };
        self.problem.set_observations(y)?;
        self.problem.set_lambda(lambda)?;
        let warm = self.warm.as_ref().map(|(a, l)| WarmStart {
            amplitudes: a.as_slice(),
            lipschitz: Some(*l),
        });
        let report = reconstruct_from(&self.problem, &config.solver, warm)?;
        self.solves += 1;
        let clusters = detect_clusters(report.a_hat.as_slice(), &self.dict, config.threshold_fraction);
        self.warm = Some((report.a_hat.into_inner(), report.lipschitz));
        Ok(clusters)
    }
}

fn peaks_of<T: Real>(clusters: &[Cluster<T>]) -> PeakList<T> {
    PeakList::new(
        clusters.iter().map(|c| c.center).collect(),
        clusters.iter().map(|c| c.width).collect(),
    )
    .expect("cluster centroids are finite and widths positive")
}

fn dip_vector<T: Real>(records: &[ProjectionRecord<T>], mean_reference: T, paired: bool) -> Vec<T> {
    records
        .iter()
        .map(|r| match (paired, r.reference_count) {
            (true, Some(reference)) => reference - r.signal_count,
            _ => mean_reference - r.signal_count,
        })
        .collect()
}

/// Least-squares fit of the projection model to the raw counts.
///
/// References all share the baseline-only model, so they enter as one
/// observation at their mean, weighted by their number.
struct ModelFit<T> {
    observations: Vec<Observation<T>>,
    reference_sum: T,
    reference_count: usize,
    options: FitOptions<T>,
    expected_peaks: usize,
    last: Option<FitStart<T>>,
}

impl<T: Real> ModelFit<T> {
    fn new(options: FitOptions<T>, expected_peaks: usize) -> Self {
        Self {
            observations: Vec::new(),
            reference_sum: T::zero(),
            reference_count: 0,
            options,
            expected_peaks,
            last: None,
        }
    }

    fn push(&mut self, record: &ProjectionRecord<T>) {
        self.observations.push(Observation {
            tones: record.applied_frequencies.clone(),
            count: record.signal_count,
            weight: T::one(),
        });
        if let Some(r) = record.reference_count {
            self.reference_sum += r;
            self.reference_count += 1;
        }
    }

    fn mean_reference(&self) -> T {
        self.reference_sum / T::from_usize_lossy(self.reference_count)
    }

    /// Runs `f` on the projection data plus one observation carrying the mean
    /// reference with the weight of all references.
    fn with_observations<R>(&mut self, f: impl FnOnce(&[Observation<T>], &FitOptions<T>) -> R) -> R {
        let mean = self.mean_reference();
        let mut obs = std::mem::take(&mut self.observations);
        obs.push(Observation {
            tones: Vec::new(),
            count: mean,
            weight: T::from_usize_lossy(self.reference_count),
        });
        let out = f(&obs, &self.options);
        obs.pop();
        self.observations = obs;
        out
    }

    /// Fits from the previous solution and from `clusters`, keeping the lower
    /// residual. The warm start can sit in a local minimum with one dip on noise.
    fn fit(&mut self, clusters: &[Cluster<T>]) -> Option<LorentzianFit<T>> {
        let seeds = seed_clusters(clusters, self.expected_peaks, self.options.width_guess);
        if self.last.is_none() && seeds.is_none() {
            return None;
        }
        let baseline = self.mean_reference();
        let last = self.last.take();
        let result = self.with_observations(|obs, options| {
            let warm = last.as_ref().and_then(|prev| fit_observations(obs, prev, options).ok());
            let seeded = seeds.and_then(|seeds| {
                let start = FitStart {
                    baseline,
                    centers: seeds.iter().map(|c| c.0).collect(),
                    widths: seeds
                        .iter()
                        .map(|c| if options.fixed_width { options.width_guess } else { c.1 })
                        .collect(),
                    amplitudes: seeds.iter().map(|c| c.2).collect(),
                };
                fit_observations(obs, &start, options).ok()
            });
            match (warm, seeded) {
                (Some(a), Some(b)) => Some(if b.residual_rms < a.residual_rms { b } else { a }),
                (a, b) => a.or(b),
            }
        });
        self.last = match &result {
            Some(f) => Some(start_of(f)),
            None => last,
        };
        result
    }

    /// Refits `from` with free widths, for the width check before stopping.
    fn free_width_fit(&mut self, from: &LorentzianFit<T>) -> Option<PeakList<T>> {
        let start = start_of(from);
        self.with_observations(|obs, options| {
            let options = FitOptions {
                fixed_width: false,
                ..options.clone()
            };
            fit_observations(obs, &start, &options).ok().map(|f| f.peaks)
        })
    }
}

fn start_of<T: Real>(f: &LorentzianFit<T>) -> FitStart<T> {
    FitStart {
        baseline: f.baseline,
        centers: f.peaks.centers().to_vec(),
        widths: f.peaks.widths().to_vec(),
        amplitudes: f.amplitudes.clone(),
    }
}

/// Starting `(center, width, mass)` triples for the fit: the clusters
/// themselves, with the weakest dropped or the broadest split in two until
/// there are `expected`. A cluster narrower than 1.5 `width` is never split.
fn seed_clusters<T: Real>(clusters: &[Cluster<T>], expected: usize, width: T) -> Option<Vec<(T, T, T)>> {
    let mut seeds: Vec<(T, T, T)> = clusters.iter().map(|c| (c.center, c.width, c.mass)).collect();
    let two = T::lit(2.0);
    while seeds.len() > expected {
        let weakest = (0..seeds.len()).min_by(|&a, &b| seeds[a].2.partial_cmp(&seeds[b].2).unwrap_or(Ordering::Equal))?;
        seeds.remove(weakest);
    }
    while seeds.len() < expected {
        let broadest = (0..seeds.len()).max_by(|&a, &b| seeds[a].1.partial_cmp(&seeds[b].1).unwrap_or(Ordering::Equal))?;
        let (c, w, m) = seeds[broadest];
        if w < T::lit(1.5) * width {
            return None;
        }
        let offset = (w - width) / two;
        seeds[broadest] = (c - offset, width, m / two);
        seeds.insert(broadest + 1, (c + offset, width, m / two));
    }
    Some(seeds)
}

fn focus_exclusions<T: Real>(grid: &[T], peaks: &PeakList<T>, half_width: T, tones: usize) -> BTreeSet<usize> {
    let excluded: BTreeSet<usize> = grid
        .iter()
        .enumerate()
        .filter(|(_, &nu)| {
            peaks
                .centers()
                .iter()
                .zip(peaks.widths())
                .all(|(&c, &w)| (nu - c).abs() > half_width * w)
        })
        .map(|(j, _)| j)
        .collect();
    if grid.len() - excluded.len() < tones {
        BTreeSet::new()
    } else {
        excluded
    }
}

struct Estimate<T> {
    clusters: Vec<Cluster<T>>,
    peaks: PeakList<T>,
    fitted: Option<LorentzianFit<T>>,
}

impl<T: Real> Estimate<T> {
    /// What a snapshot reports. With the fit estimator a failed fit reports
    /// nothing, like a failed raster fit, instead of raw cluster centroids.
    fn reported(&self, estimator: CenterEstimator) -> PeakList<T> {
        match (estimator, &self.fitted) {
            (CenterEstimator::Reconstruction, _) => self.peaks.clone(),
            (CenterEstimator::Fit, Some(f)) => f.peaks.clone(),
            (CenterEstimator::Fit, None) => PeakList::empty(),
        }
    }
}

struct Engine<'a, T> {
    config: &'a CsConfig<T>,
    window: FrequencyWindow<T>,
    sigma_hat: T,
    records: Vec<ProjectionRecord<T>>,
    recon: Reconstruction<T>,
    model: ModelFit<T>,
    refined: bool,
}

impl<T: Real> Engine<'_, T> {
    fn push(&mut self, record: ProjectionRecord<T>) -> Result<()> {
        self.recon.push(&record)?;
        self.model.push(&record);
        self.records.push(record);
        Ok(())
    }

    fn estimate(&mut self) -> Result<Estimate<T>> {
        let y = dip_vector(&self.records, self.model.mean_reference(), self.config.paired_reference);
        // Candidates may extend past the window to absorb edge effects; resonances cannot.
        let window = self.window;
        let clusters: Vec<Cluster<T>> = self
            .recon
            .solve(y, self.config, self.sigma_hat)?
            .into_iter()
            .filter(|c| window.contains(c.center))
            .collect();
        let mut peaks = peaks_of(&clusters);
        let mut fitted = None;
        if self.config.estimator == CenterEstimator::Fit {
            fitted = self.model.fit(&clusters);
            if let Some(f) = &fitted {
                peaks = f.peaks.clone();
            }
        }
        Ok(Estimate { clusters, peaks, fitted })
    }

    /// Least-squares estimate used for refinement and the width check.
    fn fitted(&mut self, estimate: &Estimate<T>) -> Option<LorentzianFit<T>> {
        match &estimate.fitted {
            Some(f) => Some(f.clone()),
            None => self.model.fit(&estimate.clusters),
        }
    }

    /// Widths of a free-width refit of the current estimate.
    fn widths_settled(&mut self, estimate: &Estimate<T>, ok: impl Fn(&PeakList<T>) -> bool) -> bool {
        self.fitted(estimate)
            .and_then(|f| self.model.free_width_fit(&f))
            .is_some_and(|p| ok(&p))
    }

    fn refine(&mut self, anchor: &PeakList<T>) -> Result<()> {
        let refined = self.recon.dict.refine_with(anchor, &self.config.refine)?;
        let solves = self.recon.solves;
        self.recon = Reconstruction::new(refined, &self.records)?;
        self.recon.solves = solves;
        self.refined = true;
        Ok(())
    }
}

/// Runs one adaptive CS trial against `backend`.
///
/// `dictionary` supplies the measurement grid and the coarse candidate grid;
/// `truth`, when known, is used only to score the outcome.
pub fn run_cs_trial<T: Real, B: MeasurementBackend<T> + ?Sized>(
    backend: &mut B,
    dictionary: &Dictionary<T>,
    config: &CsConfig<T>,
    seed: u64,
    truth: Option<&ResonanceSet<T>>,
) -> Result<CsTrial<T>> {
    config.validate()?;
    let grid = dictionary.measurement_grid().to_vec();
    let window: FrequencyWindow<T> = backend.window();
    let mut fit_options = FitOptions::for_width(window, config.characteristic_width);
    fit_options.max_iterations = 100;
    fit_options.fixed_width = config.fit_fixed_width;
    fit_options.min_significance = config.fit_min_significance;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let initial = run_initial_phase(backend, &grid, config.n_initial, config.tones, &mut rng)?;
    let mut engine = Engine {
        config,
        window,
        sigma_hat: initial.noise_sigma_estimate,
        records: Vec::with_capacity(config.max_measurements),
        recon: Reconstruction::new(dictionary.clone(), &[])?,
        model: ModelFit::new(fit_options, config.expected_peaks),
        refined: false,
    };
    for record in initial.records {
        engine.push(record)?;
    }
    let mut convergence = ConvergenceState::new(
        config.convergence_tolerance,
        config.required_consecutive,
        config.expected_peaks,
    );
    let width_ok = |peaks: &PeakList<T>| {
        peaks
            .widths()
            .iter()
            .all(|&w| (w - config.characteristic_width).abs() <= config.width_tolerance * config.characteristic_width)
    };

    let mut refined_at = None;
    let mut excluded = BTreeSet::new();
    let mut terminated: Option<(Termination, usize, PeakList<T>)> = None;
    let mut snapshots = Vec::new();
    let mut last_peaks = PeakList::empty();
    for &c in config.report_counts.iter().filter(|&&c| c < config.n_initial) {
        snapshots.push(Snapshot {
            measurements: c,
            peaks: PeakList::empty(),
        });
    }
    let mut count = engine.records.len();

    loop {
        assert!(count <= config.max_measurements, "projection cap exceeded");
        let reporting = config.report_counts.contains(&count);
        if terminated.is_none() || reporting {
            let mut estimate = engine.estimate()?;
            if terminated.is_none() && convergence.update(&estimate.peaks) {
                if !engine.refined {
                    let anchor = engine.fitted(&estimate).map_or_else(|| estimate.peaks.clone(), |f| f.peaks);
                    engine.refine(&anchor)?;
                    refined_at = Some(count);
                    if let Some(h) = config.focus_half_width {
                        excluded = focus_exclusions(&grid, &anchor, h, config.tones);
                    }
                    convergence.reset();
                    estimate = engine.estimate()?;
                    convergence.update(&estimate.peaks);
                } else if engine.widths_settled(&estimate, width_ok) {
                    terminated = Some((Termination::Converged, count, estimate.peaks.clone()));
                }
            }
            if reporting {
                snapshots.push(Snapshot {
                    measurements: count,
                    peaks: estimate.reported(config.estimator),
                });
            }
            last_peaks = estimate.reported(config.estimator);
        }

        if (terminated.is_some() && !config.extend_to_max) || count >= config.max_measurements {
            break;
        }
        let indices = draw_projection(&mut rng, grid.len(), config.tones, &excluded)?;
        let with_reference = count.is_multiple_of(config.reference_every);
        let record = measure_projection(backend, &grid, indices, count, with_reference)?;
        engine.push(record)?;
        count += 1;
    }

    let (terminated_by, used, peaks) =
        terminated.unwrap_or((Termination::MaxMeasurements, count, last_peaks));
    Ok(CsTrial {
        outcome: TrialOutcome::score(peaks, used, terminated_by, config.expected_peaks, truth),
        snapshots,
        refined_at,
        projections: count,
        solves: engine.recon.solves,
    })
}
