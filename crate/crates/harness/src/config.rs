//! Scenario and sweep files.
//!
//! Both are TOML. A scenario fixes the physics (field magnitude, window,
//! linewidth, SNR), the acquisition (tones, budget, reported point counts) and
//! the Monte-Carlo size. A sweep is a base scenario plus one axis to vary.
//! Every field except the physics has a default; see `presets/` for complete
//! examples.

use std::path::Path;

use esr_cs::spectrum::NvConstants;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cs,
    Raster,
    Both,
}

impl Method {
    pub fn runs_cs(self) -> bool {
        matches!(self, Method::Cs | Method::Both)
    }

    pub fn runs_raster(self) -> bool {
        matches!(self, Method::Raster | Method::Both)
    }

    pub fn names(self) -> Vec<MethodName> {
        let mut v = Vec::new();
        if self.runs_cs() {
            v.push(MethodName::Cs);
        }
        if self.runs_raster() {
            v.push(MethodName::Raster);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Cs,
    Raster,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Cs => "cs",
            MethodName::Raster => "raster",
        }
    }
}

/// Knobs of the adaptive loop that a scenario may override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsSettings {
    pub n_initial: usize,
    pub lambda_scale: f64,
    pub threshold_fraction: f64,
    /// MHz
    pub convergence_tolerance: f64,
    pub required_consecutive: usize,
    pub width_tolerance: f64,
    /// Spacing of the coarse candidate grid, MHz.
    pub candidate_spacing: f64,
    /// Candidates extend this many linewidths past each window edge.
    pub candidate_margin: f64,
    /// Restrict tones to this many linewidths around converged peaks.
    pub focus_half_width: Option<f64>,
    /// Hold fitted widths at the linewidth while estimating centers.
    pub fit_fixed_width: bool,
    pub fit_min_significance: f64,
}

impl Default for CsSettings {
    fn default() -> Self {
        Self {
            n_initial: 10,
            lambda_scale: 4.0,
            threshold_fraction: 0.1,
            convergence_tolerance: 2.0,
            required_consecutive: 4,
            width_tolerance: 0.5,
            candidate_spacing: 1.0,
            candidate_margin: 2.0,
            focus_half_width: None,
            fit_fixed_width: true,
            fit_min_significance: 4.0,
        }
    }
}

fn default_tones() -> usize {
    3
}

fn default_spacing() -> f64 {
    1.0
}

fn default_reference() -> f64 {
    1000.0
}

fn default_depth() -> f64 {
    10.0
}

fn default_method() -> Method {
    Method::Both
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    /// Bias field magnitude, Gauss. Directions are drawn per sample.
    pub field_gauss: f64,
    /// `[lo, hi]`, MHz.
    pub window_mhz: [f64; 2],
    /// Lorentzian FWHM of every resonance, MHz.
    pub linewidth_mhz: f64,
    /// Deepest clean dip over the noise standard deviation; `inf` for noiseless.
    pub snr: f64,
    #[serde(default = "default_tones")]
    pub tones: usize,
    pub n_samples: usize,
    /// CS projection budget; defaults to the largest point count.
    #[serde(default)]
    pub max_measurements: Option<usize>,
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Measurement counts at which both methods are scored.
    pub point_counts: Vec<usize>,
    /// Spacing of the measurement grid, MHz.
    #[serde(default = "default_spacing")]
    pub grid_spacing_mhz: f64,
    /// Mean count with no microwave applied.
    #[serde(default = "default_reference")]
    pub reference_counts: f64,
    /// Depth of a single isolated dip, counts.
    #[serde(default = "default_depth")]
    pub dip_depth: f64,
    #[serde(default)]
    pub cs: CsSettings,
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn budget(&self) -> usize {
        self.max_measurements
            .unwrap_or_else(|| self.point_counts.iter().copied().max().unwrap_or(0))
    }

    /// Points on the measurement grid (both window edges included).
    pub fn grid_points(&self) -> usize {
        let [lo, hi] = self.window_mhz;
        ((hi - lo) / self.grid_spacing_mhz + 1e-9).floor() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.window_mhz;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("window_mhz must be [lo, hi] with lo < hi"));
        }
        if !(self.field_gauss >= 0.0 && self.field_gauss.is_finite()) {
            return Err(invalid("field_gauss must be finite and nonnegative"));
        }
        // Any direction must keep all eight resonances inside the window.
        let consts = NvConstants::<f64>::default();
        let reach = consts.gyromagnetic_ratio * self.field_gauss;
        let d = consts.zero_field_splitting;
        if d - reach < lo || d + reach > hi {
            return Err(invalid(format!(
                "window [{lo}, {hi}] does not contain D +/- gamma B = [{}, {}]",
                d - reach,
                d + reach
            )));
        }
        if !(self.linewidth_mhz > 0.0 && self.linewidth_mhz.is_finite()) {
            return Err(invalid("linewidth_mhz must be positive"));
        }
        if !(self.snr > 0.0) {
            return Err(invalid("snr must be positive (inf for noiseless)"));
        }
        if self.tones == 0 || self.tones > esr_cs::dictionary::MAX_TONES {
            return Err(invalid("tones must be in 1..=4"));
        }
        if self.n_samples == 0 {
            return Err(invalid("n_samples must be at least 1"));
        }
        if !(self.grid_spacing_mhz > 0.0) {
            return Err(invalid("grid_spacing_mhz must be positive"));
        }
        if !(self.reference_counts > 0.0 && self.dip_depth > 0.0) {
            return Err(invalid("reference_counts and dip_depth must be positive"));
        }
        if self.point_counts.is_empty() {
            return Err(invalid("point_counts must not be empty"));
        }
        if !self.point_counts.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("point_counts must be strictly increasing"));
        }
        let m = self.grid_points();
        let max_count = *self.point_counts.last().expect("nonempty");
        if self.point_counts[0] < 8 {
            return Err(invalid("every point count must allow eight peaks"));
        }
        if self.method.runs_raster() && max_count > m {
            return Err(invalid(format!("point count {max_count} exceeds the {m}-point grid")));
        }
        if self.method.runs_cs() {
            if self.budget() < max_count {
                return Err(invalid("max_measurements is below the largest point count"));
            }
            if self.budget() < self.cs.n_initial || self.cs.n_initial < 4 {
                return Err(invalid("cs.n_initial must be at least 4 and within the budget"));
            }
            if !(self.cs.candidate_spacing > 0.0 && self.cs.candidate_margin >= 0.0) {
                return Err(invalid("cs.candidate_spacing must be positive and the margin nonnegative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NPoints,
    Snr,
    Width,
    Tones,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::NPoints => "n_points",
            Axis::Snr => "snr",
            Axis::Width => "width",
            Axis::Tones => "tones",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub base: ScenarioConfig,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep serializes")
    }

    /// The base scenario with the axis set to `value`.
    pub fn scenario_at(&self, value: f64) -> ScenarioConfig {
        let mut s = self.base.clone();
        match self.axis {
            Axis::NPoints => s.point_counts = vec![value as usize],
            Axis::Snr => s.snr = value,
            Axis::Width => s.linewidth_mhz = value,
            Axis::Tones => s.tones = value as usize,
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(invalid("sweep values must not be empty"));
        }
        let increasing = self.values.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(invalid("sweep values must be strictly monotone"));
        }
        if matches!(self.axis, Axis::NPoints | Axis::Tones)
            && self.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0)
        {
            return Err(invalid(format!("{} values must be positive integers", self.axis.name())));
        }
        match self.axis {
            // One scenario covers every count; validate it as such.
            Axis::NPoints => {
                let mut s = self.base.clone();
                let mut counts: Vec<usize> = self.values.iter().map(|&v| v as usize).collect();
                counts.sort_unstable();
                s.point_counts = counts;
                s.validate()
            }
            _ => self.values.iter().try_for_each(|&v| self.scenario_at(v).validate()),
        }
    }
}

/// Built-in scenario presets.
pub const SCENARIO_PRESETS: &[(&str, &str)] = &[
    ("high-field", include_str!("../presets/high-field.toml")),
    ("low-field", include_str!("../presets/low-field.toml")),
];

/// Built-in sweep presets.
pub const SWEEP_PRESETS: &[(&str, &str)] = &[
    ("snr-sweep", include_str!("../presets/snr-sweep.toml")),
    ("width-sweep", include_str!("../presets/width-sweep.toml")),
    ("tones-sweep", include_str!("../presets/tones-sweep.toml")),
];

pub fn scenario_preset(name: &str) -> Result<ScenarioConfig> {
    SCENARIO_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| invalid(format!("unknown scenario preset {name:?}")))
        .and_then(|(_, text)| ScenarioConfig::from_toml(text))
}

pub fn sweep_preset(name: &str) -> Result<SweepSpec> {
    SWEEP_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| invalid(format!("unknown sweep preset {name:?}")))
        .and_then(|(_, text)| SweepSpec::from_toml(text))
}
