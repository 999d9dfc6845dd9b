//! Executes one configured run and writes its artifacts.
//!
//! Files in the output directory:
//!
//! | file | content |
//! |---|---|
//! | `spectrum.json` | spectral report of the well |
//! | `charges.csv` | computed charges (partial if the run stopped early) |
//! | `linear_exact.csv` | closed-form charges, linear scenarios only |
//! | `suppression.json` | windowed beating contrast, when the run spans one period |
//! | `grid_NN.csv` | reconstructed wavefunction at the requested snapshot times |
//! | `eigenfunctions.csv` | the two bound states, when requested |
//! | `metadata.json` | inputs, derived quantities, status, timing |
//!
//! Only `metadata.json` carries wall-clock information, so all other files are
//! bit-identical between runs of the same config.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use qbeat::charges::{solve_charges, ChargeTrajectory, Outcome};
use qbeat::dynamics::{
    linear_reference_contrast, mass, reconstruct, suppression_report, well_occupation, Grid, Side,
    SuppressionOptions, SuppressionReport,
};
use qbeat::export::{fmt_f64, write_grid_csv, write_trajectory_csv};
use qbeat::spectral::spectral_report;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Resolved, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_BLOWUP: i32 = 4;

/// Samples per period for the reference contrast of the exact linear beating.
const REFERENCE_SAMPLES: usize = 4000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] qbeat::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Io { .. } => EXIT_IO,
            RunError::Core(qbeat::Error::Io(_)) => EXIT_IO,
            RunError::Core(_) => EXIT_NOT_CONVERGED,
        }
    }
}

pub(crate) fn io_error(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Io { context, source }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BlowUp { time: f64 },
    /// The step size no longer resolves the growth of the charges.
    Unresolved { time: f64, resolution: f64 },
    NotConverged { message: String },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::BlowUp { .. } => "blow_up",
            RunStatus::Unresolved { .. } => "unresolved",
            RunStatus::NotConverged { .. } => "not_converged",
        }
    }

    /// Unresolved growth counts as blow-up where the nonlinearity permits it (`sigma >= 1`).
    pub fn exit_code(&self, sigma: f64) -> i32 {
        match self {
            RunStatus::Completed => EXIT_OK,
            RunStatus::BlowUp { .. } => EXIT_BLOWUP,
            RunStatus::Unresolved { .. } if sigma >= 1.0 => EXIT_BLOWUP,
            RunStatus::Unresolved { .. } | RunStatus::NotConverged { .. } => EXIT_NOT_CONVERGED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub file: String,
    pub t: f64,
    pub t_over_period: f64,
    pub half_width: f64,
    pub spacing: f64,
    pub mass: f64,
    pub left: f64,
    pub right: f64,
}

/// Contents of `metadata.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub code_version: &'static str,
    pub name: Option<String>,
    pub config: RunConfig,
    pub lambda0: f64,
    pub lambda1: f64,
    pub delta_lambda: f64,
    pub beating_period: f64,
    pub gamma_effective: Option<f64>,
    pub strengths: (f64, f64),
    pub sigma: f64,
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
    pub status: RunStatus,
    pub exit_code: i32,
    pub last_time: Option<f64>,
    pub last_abs_q: Option<(f64, f64)>,
    pub max_inner_iters: Option<u32>,
    pub max_residual: Option<f64>,
    /// Relative L-infinity error against the closed-form charges (linear scenarios).
    pub linear_error: Option<f64>,
    pub suppression_time: Option<f64>,
    pub snapshots: Vec<Snapshot>,
    /// Largest `|mass(t) - ||psi0||^2|` over the snapshots.
    pub mass_drift: Option<f64>,
    pub wall_time_s: f64,
    pub timestamp_unix: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Progress messages on stderr.
    pub verbose: bool,
}

/// Runs `cfg` and writes all artifacts into `cfg.output.dir`.
///
/// Solver failures do not produce an `Err`: they end up in `Metadata::status`, with
/// whatever trajectory was computed written out. `Err` means the run could not start
/// or its files could not be written.
pub fn run(cfg: &RunConfig, opts: RunOptions) -> Result<Metadata, RunError> {
    let start = Instant::now();
    let res = Resolved::new(cfg)?;
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(io_error(format!("creating {}", dir.display())))?;
    let label = cfg.name.clone().unwrap_or_else(|| "run".into());
    let say = |msg: String| {
        if opts.verbose {
            eprintln!("[{label}] {msg}");
        }
    };

    let report = spectral_report(&res.well)?;
    write_json(&dir.join("spectrum.json"), &report)?;

    let pair = res.linear.states.pair;
    let tb = res.beating_period;
    let p = res.params;
    say(format!("T_B = {tb:.6}, dt = {:.6e}, {} steps", p.dt, p.steps()));

    let (traj, status) = match solve_charges(&res.well, &res.nonlinearity, &res.psi0, &p) {
        Ok(t) => {
            let s = match t.outcome {
                Outcome::Completed => RunStatus::Completed,
                Outcome::BlowUp { time } => RunStatus::BlowUp { time },
                Outcome::Unresolved { time, resolution } => RunStatus::Unresolved { time, resolution },
            };
            (Some(t), s)
        }
        Err(e @ qbeat::Error::InnerIteration { .. }) => (None, RunStatus::NotConverged { message: e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    say(format!("solver: {}", status.label()));

    let mut linear_error = None;
    let mut suppression = None;
    let mut snapshots = Vec::new();
    if let Some(traj) = &traj {
        write_with(&dir.join("charges.csv"), |w| write_trajectory_csv(w, traj))?;

        if cfg.scenario.is_linear() {
            let exact = exact_trajectory(&res, traj);
            write_with(&dir.join("linear_exact.csv"), |w| write_trajectory_csv(w, &exact))?;
            linear_error = Some(relative_error(traj, &exact));
        }

        if ((tb / traj.dt).round() as usize) < traj.len() {
            let s = &cfg.suppression;
            let reference =
                s.relative.then(|| linear_reference_contrast(&res.linear, s.metric, REFERENCE_SAMPLES));
            let opts = SuppressionOptions {
                metric: s.metric,
                threshold: s.threshold,
                reference_contrast: reference,
                ..Default::default()
            };
            let rep = suppression_report(traj, &pair, &opts)?;
            write_json(&dir.join("suppression.json"), &rep)?;
            suppression = Some(rep);
        }

        for (k, &tau) in cfg.output.snapshots.iter().enumerate() {
            let n = (tau * tb / traj.dt).round() as usize;
            if n >= traj.len() {
                say(format!("snapshot t = {tau} T_B lies beyond the trajectory, skipped"));
                continue;
            }
            let t = traj.times[n];
            let grid = Grid::for_state(res.well.a, t, &res.psi0, cfg.output.max_spacing)?;
            let gf = reconstruct(traj, &res.well, &res.psi0, t, grid)?;
            let file = format!("grid_{k:02}.csv");
            write_with(&dir.join(&file), |w| write_grid_csv(w, &gf))?;
            let snap = Snapshot {
                file,
                t,
                t_over_period: t / tb,
                half_width: grid.half_width(),
                spacing: grid.spacing,
                mass: mass(&gf),
                left: well_occupation(&gf, Side::Left)?,
                right: well_occupation(&gf, Side::Right)?,
            };
            say(format!("snapshot t = {:.4} T_B: mass {:.8}", snap.t_over_period, snap.mass));
            snapshots.push(snap);
        }
    }

    if cfg.output.eigenfunctions {
        write_eigenfunctions(&dir.join("eigenfunctions.csv"), &res, cfg.output.max_spacing)?;
    }

    let norm2 = res.psi0.norm().powi(2);
    let mass_drift = snapshots.iter().map(|s| (s.mass - norm2).abs()).reduce(f64::max);
    let sigma = res.nonlinearity.sigma;
    let exit_code = status.exit_code(sigma);
    let meta = Metadata {
        code_version: env!("CARGO_PKG_VERSION"),
        name: cfg.name.clone(),
        config: cfg.clone(),
        lambda0: pair.lambda0,
        lambda1: pair.lambda1,
        delta_lambda: pair.delta_lambda,
        beating_period: tb,
        gamma_effective: res.gamma_effective,
        strengths: qbeat::charges::well_strengths(&res.well, &res.nonlinearity),
        sigma,
        dt: p.dt,
        t_final: p.t_final,
        steps: p.steps(),
        status,
        exit_code,
        last_time: traj.as_ref().map(|t| t.last_time()),
        last_abs_q: traj.as_ref().and_then(|t| Some((t.q1.last()?.norm(), t.q2.last()?.norm()))),
        max_inner_iters: traj.as_ref().map(|t| t.max_inner_iters()),
        max_residual: traj.as_ref().map(|t| t.residuals.iter().copied().fold(0.0, f64::max)),
        linear_error,
        suppression_time: suppression.as_ref().and_then(|s: &SuppressionReport| s.suppression_time),
        snapshots,
        mass_drift,
        wall_time_s: start.elapsed().as_secs_f64(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    write_json(&dir.join("metadata.json"), &meta)?;
    Ok(meta)
}

/// The closed-form linear charges sampled on the trajectory's time grid.
fn exact_trajectory(res: &Resolved, traj: &ChargeTrajectory) -> ChargeTrajectory {
    let (q1, q2): (Vec<Complex64>, Vec<Complex64>) = traj.times.iter().map(|&t| res.linear.charges(t)).unzip();
    ChargeTrajectory {
        dt: traj.dt,
        times: traj.times.clone(),
        q1,
        q2,
        inner_iters: vec![0; traj.len()],
        residuals: vec![0.0; traj.len()],
        strengths: traj.strengths,
        sigma: 0.0,
        outcome: Outcome::Completed,
    }
}

/// `max |q - q_exact| / max |q_exact|` over both charges.
pub fn relative_error(traj: &ChargeTrajectory, exact: &ChargeTrajectory) -> f64 {
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for n in 0..traj.len().min(exact.len()) {
        err = err.max((traj.q1[n] - exact.q1[n]).norm()).max((traj.q2[n] - exact.q2[n]).norm());
        scale = scale.max(exact.q1[n].norm()).max(exact.q2[n].norm());
    }
    err / scale
}

fn write_eigenfunctions(path: &Path, res: &Resolved, max_spacing: f64) -> Result<(), RunError> {
    let s = &res.linear.states;
    let a = res.well.a;
    let width = (10.0 * a).max(a + 17.0 / s.excited.kappa());
    let grid = Grid::new(a, width, max_spacing.min(0.05))?;
    write_with(path, |w| {
        writeln!(w, "x,phi_fundamental,phi_excited")?;
        for x in grid.points() {
            writeln!(w, "{},{},{}", fmt_f64(x), fmt_f64(s.fundamental.eval(x)), fmt_f64(s.excited.eval(x)))?;
        }
        Ok(())
    })
}

fn write_with<F>(path: &Path, f: F) -> Result<(), RunError>
where
    F: FnOnce(&mut BufWriter<File>) -> qbeat::Result<()>,
{
    let file = File::create(path).map_err(io_error(format!("creating {}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(io_error(format!("writing {}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_error(format!("writing {}", path.display())))
}

/// Output directory of a sweep member.
pub fn member_dir(root: &Path, axis: &str, index: usize) -> PathBuf {
    root.join(format!("{axis}_{index:03}"))
}
