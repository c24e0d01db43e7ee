use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use esr_cs::spectrum::synthesize_spectrum;
use esr_cs_harness::export::{scenario_rows, to_csv, to_json};
use esr_cs_harness::scenario::draw_truth;
use esr_cs_harness::seeds::{derive, Stream};
use esr_cs_harness::selfcheck::oracle_check;
use esr_cs_harness::{
    run_scenario, run_sweep, scenario_preset, sweep_preset, Format, HarnessError, Result, ScenarioConfig, SweepSpec,
};

#[derive(Parser)]
#[command(name = "esr-cs", version, about = "Compressed-sensing vs raster ESR acquisition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit one synthetic spectrum of a scenario (frequency, clean and noisy counts).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Sample index whose field direction is used.
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Run one scenario and print its summary table.
    Run {
        #[command(flatten)]
        common: Common,
        /// Run samples one after another instead of on the thread pool.
        #[arg(long)]
        serial: bool,
    },
    /// Run one sweep and print its summary table.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        serial: bool,
    },
    /// Compare the solver against the exhaustive oracle on small random problems.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Largest accepted relative objective gap.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML scenario (or sweep) file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: high-field, low-field, snr-sweep, width-sweep, tones-sweep.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the base seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut s = match (&self.config, &self.preset) {
            (Some(path), _) => ScenarioConfig::load(path)?,
            (None, Some(name)) => scenario_preset(name)?,
            (None, None) => return Err(HarnessError::Config("pass --config or --preset".into())),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        Ok(s)
    }

    fn sweep(&self) -> Result<SweepSpec> {
        let mut s = match (&self.config, &self.preset) {
            (Some(path), _) => SweepSpec::load(path)?,
            (None, Some(name)) => sweep_preset(name)?,
            (None, None) => return Err(HarnessError::Config("pass --config or --preset".into())),
        };
        if let Some(seed) = self.seed {
            s.base.seed = seed;
        }
        Ok(s)
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, text).map_err(|e| HarnessError::io(path, e)),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| HarnessError::io(std::path::Path::new("<stdout>"), e)),
        }
    }
}

fn simulate(common: &Common, sample: usize) -> Result<()> {
    let config = common.scenario()?;
    let truth = draw_truth(&config, sample)?;
    let grid = esr_cs::FrequencyWindow::new(config.window_mhz[0], config.window_mhz[1])?.grid(config.grid_points());
    let spectrum = synthesize_spectrum(
        &truth.resonances,
        &grid,
        config.reference_counts,
        config.snr,
        derive(config.seed, sample, Stream::RasterNoise),
    )?;
    let text = match common.format {
        Format::Csv => {
            let mut out = String::from("frequency_mhz,clean_counts,noisy_counts\n");
            for ((f, c), n) in spectrum.grid.iter().zip(&spectrum.clean_counts).zip(&spectrum.noisy_counts) {
                out.push_str(&format!("{f},{c},{n}\n"));
            }
            out
        }
        Format::Json => serde_json::to_string_pretty(&serde_json::json!({
            "config": config,
            "field_direction": truth.field.direction(),
            "centers_mhz": truth.resonances.centers(),
            "noise_sigma": spectrum.noise_sigma,
            "frequency_mhz": spectrum.grid,
            "clean_counts": spectrum.clean_counts,
            "noisy_counts": spectrum.noisy_counts,
        }))
        .expect("spectrum serializes"),
    };
    common.emit(&text)
}

fn run(common: &Common, serial: bool) -> Result<()> {
    let config = common.scenario()?;
    let result = run_scenario(&config, !serial)?;
    let rows = scenario_rows(&result, None, config.seed);
    let text = match common.format {
        Format::Csv => to_csv(&rows)?,
        Format::Json => to_json(&rows, &config, &[])?,
    };
    common.emit(&text)
}

fn sweep(common: &Common, serial: bool) -> Result<()> {
    let spec = common.sweep()?;
    let result = run_sweep(&spec, !serial)?;
    for e in &result.errors {
        eprintln!("warning: {e}");
    }
    let text = match common.format {
        Format::Csv => to_csv(&result.rows)?,
        Format::Json => to_json(&result.rows, &spec, &result.errors)?,
    };
    common.emit(&text)
}

fn oracle(seed: u64, instances: usize, tolerance: f64) -> Result<bool> {
    let check = oracle_check(seed, instances)?;
    println!(
        "{} instances, worst relative objective gap {:.3e} (tolerance {tolerance:e})",
        check.instances, check.worst_relative_gap
    );
    Ok(check.worst_relative_gap <= tolerance)
}

/// Runs one command; `Ok(false)` is a completed check that did not pass.
fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Simulate { common, sample } => simulate(common, *sample).map(|_| true),
        Command::Run { common, serial } => run(common, *serial).map(|_| true),
        Command::Sweep { common, serial } => sweep(common, *serial).map(|_| true),
        Command::Oracle {
            seed,
            instances,
            tolerance,
        } => oracle(*seed, *instances, *tolerance),
    }
}

fn exit_code(result: &Result<bool>) -> u8 {
    match result {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => e.exit_code() as u8,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = execute(&Cli::parse());
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use esr_cs_harness::export::from_csv;
    use esr_cs_harness::MethodName;

    fn exec(args: &[&str]) -> u8 {
        let cli = Cli::try_parse_from(std::iter::once("esr-cs").chain(args.iter().copied())).unwrap();
        exit_code(&execute(&cli))
    }

    #[test]
    fn oracle_passes_and_an_impossible_tolerance_fails() {
        assert_eq!(exec(&["oracle", "--instances", "5"]), 0);
        assert_eq!(exec(&["oracle", "--instances", "5", "--tolerance=-1"]), 2);
    }

    #[test]
    fn bad_preset_is_a_config_error() {
        assert_eq!(exec(&["run", "--preset", "nope"]), 1);
    }

    #[test]
    fn run_writes_a_table() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("tiny.toml");
        std::fs::write(
            &config,
            r#"
name = "tiny"
field_gauss = 100.0
window_mhz = [2545.0, 3195.0]
linewidth_mhz = 15.0
snr = inf
n_samples = 1
seed = 3
point_counts = [60, 120]
"#,
        )
        .unwrap();
        let out = dir.path().join("out.csv");
        let code = exec(&["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0);
        let rows = from_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(rows.len(), 4);
        let cs = rows
            .iter()
            .find(|r| r.method == MethodName::Cs && r.n_points == 120)
            .unwrap();
        assert_eq!(cs.p, 1.0);
        assert!(cs.seed == 3 && cs.n_trials == 1);
    }

    #[test]
    fn simulate_writes_the_full_grid() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("spectrum.csv");
        assert_eq!(exec(&["simulate", "--preset", "high-field", "--out", out.to_str().unwrap()]), 0);
        let text = std::fs::read_to_string(out).unwrap();
        assert!(text.starts_with("frequency_mhz,clean_counts,noisy_counts\n"));
        assert_eq!(text.lines().count(), 652);
    }

    #[test]
    fn unwritable_output_is_a_runtime_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("missing").join("x.csv");
        assert_eq!(exec(&["simulate", "--preset", "low-field", "--out", out.to_str().unwrap()]), 2);
    }
}
