//! Monte-Carlo studies of CS against raster acquisition: TOML scenarios and
//! sweeps, deterministic parallel execution and CSV/JSON tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod export;
pub mod scenario;
pub mod seeds;
pub mod selfcheck;
pub mod sweep;

pub use config::{scenario_preset, sweep_preset, Axis, Method, MethodName, ScenarioConfig, SweepSpec};
pub use error::{HarnessError, Result};
pub use export::{export_results, Format, ResultRow};
pub use scenario::{run_scenario, ScenarioResult};
pub use sweep::{run_sweep, SweepResult};
