use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qbeat::spectral::{spectral_report, WellConfig};

use crate::config::{ConfigError, Overrides, RunConfig};
use crate::presets::{load_preset, PRESETS};
use crate::runner::{run, write_json, RunError, RunOptions, EXIT_CONFIG, EXIT_OK};
use crate::sweep::{sweep, Axis};

#[derive(Debug, Parser)]
#[command(name = "qbeat", version, about = "Beating and its suppression in a two-delta double well")]
pub struct Cli {
    /// Suppress progress messages
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the spectral report of a well as JSON
    Spectrum {
        #[command(flatten)]
        source: Source,
        #[arg(long, allow_negative_numbers = true)]
        a: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        gamma1: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        gamma2: Option<f64>,
        /// Also write the report to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one scenario and write its artifacts
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run a scenario once per value of one parameter
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated parameter values
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        /// For gamma1 or gamma2 sweeps, move the other strength along with a fixed ratio
        #[arg(long)]
        keep_ratio: bool,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Check a config file; optionally print its canonical form
    ValidateConfig {
        file: PathBuf,
        #[arg(long)]
        canonical: bool,
    },
    /// List the built-in scenarios
    Scenarios,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct Source {
    /// TOML config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in scenario (see `qbeat scenarios`)
    #[arg(long)]
    pub scenario: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct OverrideArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma2: Option<f64>,
    /// Weights of the fundamental and excited states
    #[arg(long, num_args = 2, value_names = ["ALPHA", "BETA"], allow_negative_numbers = true)]
    pub mix: Option<Vec<f64>>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma0: Option<f64>,
    #[arg(long, conflicts_with = "steps_per_period")]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps_per_period: Option<u32>,
    #[arg(long, conflicts_with = "periods")]
    pub t_final: Option<f64>,
    /// Run length in beating periods
    #[arg(long)]
    pub periods: Option<f64>,
    #[arg(long)]
    pub resolution_limit: Option<f64>,
    #[arg(long)]
    pub blowup_threshold: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Snapshot times in beating periods, comma-separated
    #[arg(long, value_delimiter = ',', conflicts_with = "no_snapshots")]
    pub snapshots: Option<Vec<f64>>,
    /// Skip wavefunction reconstruction
    #[arg(long)]
    pub no_snapshots: bool,
}

impl OverrideArgs {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            a: self.a,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            mix: self.mix.as_ref().map(|m| (m[0], m[1])),
            sigma: self.sigma,
            gamma0: self.gamma0,
            dt: self.dt,
            steps_per_period: self.steps_per_period,
            t_final: self.t_final,
            periods: self.periods,
            resolution_limit: self.resolution_limit,
            blowup_threshold: self.blowup_threshold,
            out: self.out.clone(),
            snapshots: self.snapshots.clone(),
            no_snapshots: self.no_snapshots,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Sigma,
    Gamma1,
    Gamma2,
    A,
    Dt,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Sigma => Axis::Sigma,
            AxisArg::Gamma1 => Axis::Gamma1,
            AxisArg::Gamma2 => Axis::Gamma2,
            AxisArg::A => Axis::A,
            AxisArg::Dt => Axis::Dt,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError, Option<PathBuf>),
    Run(RunError),
}

impl Failure {
    fn report(&self) -> i32 {
        match self {
            Failure::Config(e, Some(p)) => eprintln!("{}: {e}", p.display()),
            Failure::Config(e, None) => eprintln!("{e}"),
            Failure::Run(e) => eprintln!("error: {e}"),
        }
        match self {
            Failure::Config(..) => EXIT_CONFIG,
            Failure::Run(e) => e.exit_code(),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Config(c, None),
            other => Failure::Run(other),
        }
    }
}

fn load(source: &Source) -> Result<RunConfig, Failure> {
    match (&source.config, &source.scenario) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::Config(ConfigError::new("", format!("cannot read file: {e}")), Some(path.clone()))
            })?;
            RunConfig::from_toml(&text).map_err(|e| Failure::Config(e, Some(path.clone())))
        }
        (None, Some(name)) => load_preset(name).map_err(|e| Failure::Config(e, None)),
        (None, None) => Err(Failure::Config(ConfigError::new("", "give --config FILE or --scenario NAME"), None)),
    }
}

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    let opts = RunOptions { verbose: !cli.quiet };
    match cli.command {
        Command::Spectrum { source, a, gamma1, gamma2, out } => {
            let base = if source.config.is_some() || source.scenario.is_some() {
                load(&source)?.well
            } else {
                load_preset("figure4").map_err(|e| Failure::Config(e, None))?.well
            };
            let well = WellConfig::new(a.unwrap_or(base.a), gamma1.unwrap_or(base.gamma1), gamma2.unwrap_or(base.gamma2))
                .map_err(|e| Failure::Config(ConfigError::new("well", e.to_string()), None))?;
            let report = spectral_report(&well).map_err(|e| Failure::Run(e.into()))?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            Ok(EXIT_OK)
        }
        Command::Run { source, overrides } => {
            let mut cfg = load(&source)?;
            cfg.apply(&overrides.to_overrides()).map_err(|e| Failure::Config(e, None))?;
            let meta = run(&cfg, opts)?;
            println!(
                "{}: {} at t = {:.6} ({:.4} T_B); artifacts in {}",
                cfg.name.as_deref().unwrap_or("run"),
                meta.status.label(),
                meta.last_time.unwrap_or(0.0),
                meta.last_time.unwrap_or(0.0) / meta.beating_period,
                cfg.output.dir.display()
            );
            if let Some(t) = meta.suppression_time {
                println!("suppression time {:.6} ({:.4} T_B)", t, t / meta.beating_period);
            }
            Ok(meta.exit_code)
        }
        Command::Sweep { source, axis, values, keep_ratio, overrides } => {
            let mut cfg = load(&source)?;
            cfg.apply(&overrides.to_overrides()).map_err(|e| Failure::Config(e, None))?;
            let out = overrides.out.clone().unwrap_or_else(|| cfg.output.dir.join("sweep"));
            let rows = sweep(&cfg, axis.into(), &values, keep_ratio, &out, opts)?;
            for r in &rows {
                println!("{} = {}: {}", Axis::from(axis).name(), r.value, r.status);
            }
            println!("summary written to {}", out.join("summary.csv").display());
            Ok(EXIT_OK)
        }
        Command::ValidateConfig { file, canonical } => {
            let text = fs::read_to_string(&file).map_err(|e| {
                Failure::Config(ConfigError::new("", format!("cannot read file: {e}")), Some(file.clone()))
            })?;
            let cfg = RunConfig::from_toml(&text).map_err(|e| Failure::Config(e, Some(file.clone())))?;
            crate::config::Resolved::new(&cfg).map_err(|e| Failure::Config(e.locate(&text), Some(file.clone())))?;
            if canonical {
                print!("{}", cfg.to_canonical());
            } else {
                println!("{}: ok", file.display());
            }
            Ok(EXIT_OK)
        }
        Command::Scenarios => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => f.report(),
    }
}

