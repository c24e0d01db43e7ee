//! Compressed-sensing acquisition of NV-center ESR spectra.
//!
//! A simulated (or real) backend returns fluorescence counts for sets of
//! simultaneous microwave tones. The CS protocol reconstructs the spectrum on
//! an overcomplete Lorentzian dictionary by nonnegative total-variation
//! regularized least squares and adapts the dictionary once the eight
//! resonances are found. A raster scan with Lorentzian fitting serves as the
//! baseline, and [`metrics`] compares the two.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common case.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod dictionary;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod peaks;
pub mod protocols;
pub mod scalar;
pub mod solver;
pub mod spectrum;

pub use acquisition::{MeasurementBackend, ProjectionRecord, SimulatedBackend};
pub use dictionary::{AmplitudeVector, Dictionary, RefineOptions, SamplingMatrix};
pub use error::{Error, Result};
pub use metrics::{summarize, MetricsSummary};
pub use peaks::PeakList;
pub use protocols::{CsConfig, Termination, TrialOutcome};
pub use scalar::Real;
pub use solver::{SolverOptions, SolverReport, TvProblem};
pub use spectrum::{BiasField, FrequencyWindow, NvConstants, ResonanceSet};

pub type BiasField64 = spectrum::BiasField<f64>;
pub type NvConstants64 = spectrum::NvConstants<f64>;
pub type ResonanceSet64 = spectrum::ResonanceSet<f64>;
pub type Window64 = spectrum::FrequencyWindow<f64>;
pub type Dictionary64 = dictionary::Dictionary<f64>;
pub type TvProblem64 = solver::TvProblem<f64>;
pub type PeakList64 = peaks::PeakList<f64>;
pub type Backend64 = acquisition::SimulatedBackend<f64>;
pub type CsConfig64 = protocols::CsConfig<f64>;
pub type TrialOutcome64 = protocols::TrialOutcome<f64>;
pub type Summary64 = metrics::MetricsSummary<f64>;

pub type ResonanceSet32 = spectrum::ResonanceSet<f32>;
pub type Dictionary32 = dictionary::Dictionary<f32>;
pub type TvProblem32 = solver::TvProblem<f32>;
pub type Backend32 = acquisition::SimulatedBackend<f32>;
pub type CsConfig32 = protocols::CsConfig<f32>;
