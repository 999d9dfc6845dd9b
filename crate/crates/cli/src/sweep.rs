//! One-parameter sweeps over a template config.
//!
//! Members run in parallel, each in its own directory `<axis>_<NNN>`. Failures are
//! recorded in the summary and do not stop the sweep. `summary.csv` columns:
//!
//! `value,status,exit_code,delta_lambda,beating_period,suppression_time,mass_drift,max_inner_iters,linear_error,error`
//!
//! Empty cells mean "not available" (e.g. no suppression detected, no snapshots).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, NonlinearitySection, RunConfig, Scenario};
use crate::runner::{io_error, member_dir, run, RunError, RunOptions};
use qbeat::export::fmt_f64;

pub const SUMMARY_HEADER: &str =
    "value,status,exit_code,delta_lambda,beating_period,suppression_time,mass_drift,max_inner_iters,linear_error,error";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Sigma,
    Gamma1,
    Gamma2,
    A,
    Dt,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Sigma => "sigma",
            Axis::Gamma1 => "gamma1",
            Axis::Gamma2 => "gamma2",
            Axis::A => "a",
            Axis::Dt => "dt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: String,
    pub exit_code: i32,
    pub delta_lambda: Option<f64>,
    pub beating_period: Option<f64>,
    pub suppression_time: Option<f64>,
    pub mass_drift: Option<f64>,
    pub max_inner_iters: Option<u32>,
    pub linear_error: Option<f64>,
    pub error: Option<String>,
}

/// Sets one parameter of `template`.
///
/// `keep_ratio` makes a `gamma1` or `gamma2` sweep move the other strength along,
/// keeping `gamma2 / gamma1` fixed. Linear scenarios switch between symmetric and
/// asymmetric as the strengths require; `sigma = 0` turns a nonlinear run linear and
/// `sigma > 0` turns a linear run nonlinear with `gamma0 = gamma1`.
pub fn apply_axis(template: &RunConfig, axis: Axis, value: f64, keep_ratio: bool) -> Result<RunConfig, ConfigError> {
    let mut c = template.clone();
    let ratio = c.well.gamma2 / c.well.gamma1;
    match axis {
        Axis::Sigma => {
            if value == 0.0 {
                c.nonlinearity = None;
                c.scenario = Scenario::LinearSymmetric;
            } else {
                let base = c.nonlinearity.unwrap_or(NonlinearitySection {
                    gamma0: c.well.gamma1,
                    sigma: value,
                    effective_gamma: true,
                });
                c.nonlinearity = Some(NonlinearitySection { sigma: value, ..base });
                c.scenario = Scenario::Nonlinear;
            }
        }
        Axis::Gamma1 => {
            c.well.gamma1 = value;
            if keep_ratio {
                c.well.gamma2 = value * ratio;
            }
        }
        Axis::Gamma2 => {
            c.well.gamma2 = value;
            if keep_ratio {
                c.well.gamma1 = value / ratio;
            }
        }
        Axis::A => c.well.a = value,
        Axis::Dt => {
            c.solver.dt = Some(value);
            c.solver.steps_per_period = None;
        }
    }
    if c.scenario.is_linear() {
        c.scenario = if c.well.gamma1 == c.well.gamma2 { Scenario::LinearSymmetric } else { Scenario::LinearAsymmetric };
    }
    c.validate()?;
    Ok(c)
}

/// Runs the sweep and writes `summary.csv` into `out`.
pub fn sweep(
    template: &RunConfig,
    axis: Axis,
    values: &[f64],
    keep_ratio: bool,
    out: &Path,
    opts: RunOptions,
) -> Result<Vec<SweepRow>, RunError> {
    fs::create_dir_all(out).map_err(io_error(format!("creating {}", out.display())))?;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let outcome = apply_axis(template, axis, value, keep_ratio).map_err(RunError::from).and_then(|mut c| {
                c.output.dir = member_dir(out, axis.name(), i);
                c.name = Some(format!("{}{}={}", c.name.map(|n| n + ":").unwrap_or_default(), axis.name(), value));
                run(&c, opts)
            });
            match outcome {
                Ok(m) => SweepRow {
                    value,
                    status: m.status.label().to_string(),
                    exit_code: m.exit_code,
                    delta_lambda: Some(m.delta_lambda),
                    beating_period: Some(m.beating_period),
                    suppression_time: m.suppression_time,
                    mass_drift: m.mass_drift,
                    max_inner_iters: m.max_inner_iters,
                    linear_error: m.linear_error,
                    error: match &m.status {
                        crate::runner::RunStatus::NotConverged { message } => Some(message.clone()),
                        _ => None,
                    },
                },
                Err(e) => SweepRow {
                    value,
                    status: "failed".into(),
                    exit_code: e.exit_code(),
                    delta_lambda: None,
                    beating_period: None,
                    suppression_time: None,
                    mass_drift: None,
                    max_inner_iters: None,
                    linear_error: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let path = out.join("summary.csv");
    fs::write(&path, summary_csv(&rows)).map_err(io_error(format!("writing {}", path.display())))?;
    Ok(rows)
}

pub fn summary_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut s = String::new();
    writeln!(s, "{SUMMARY_HEADER}").unwrap();
    for r in rows {
        let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},\"{}\"",
            fmt_f64(r.value),
            r.status,
            r.exit_code,
            opt(r.delta_lambda),
            opt(r.beating_period),
            opt(r.suppression_time),
            opt(r.mass_drift),
            r.max_inner_iters.map(|v| v.to_string()).unwrap_or_default(),
            opt(r.linear_error),
            err,
        )
        .unwrap();
    }
    s
}
