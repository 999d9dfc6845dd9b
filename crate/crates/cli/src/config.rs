//! Run configuration: a TOML file, named presets and command-line overrides.
//!
//! A config is parsed into [`RunConfig`], checked by [`RunConfig::validate`] and turned
//! into solver inputs by [`Resolved::new`]. Every failure is a [`ConfigError`] naming
//! the offending field and, when the config came from text, its line.

use std::fmt;
use std::path::PathBuf;

use num_complex::Complex64;
use qbeat::charges::{effective_gamma, LinearBeating, Nonlinearity, SolverParams};
use qbeat::dynamics::{beating_period, ContrastMetric};
use qbeat::freeprop::InitialState;
use qbeat::spectral::WellConfig;
use serde::{Deserialize, Serialize};

pub const DEFAULT_STEPS_PER_PERIOD: u32 = 2000;
pub const DEFAULT_PERIODS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    LinearSymmetric,
    LinearAsymmetric,
    Nonlinear,
}

impl Scenario {
    pub fn is_linear(self) -> bool {
        !matches!(self, Scenario::Nonlinear)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub scenario: Scenario,
    pub well: WellSection,
    pub mix: MixSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<NonlinearitySection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub suppression: SuppressionSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellSection {
    pub a: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

/// Real weights of the fundamental and excited state in the initial superposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSection {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySection {
    /// Initial strength `gamma(0)` of the time-dependent interaction.
    pub gamma0: f64,
    pub sigma: f64,
    /// Rescale the coupling so that the initial strengths average to `gamma0`.
    #[serde(default = "yes")]
    pub effective_gamma: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// `dt = T_B / steps_per_period` when `dt` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_period: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// `t_final = periods * T_B` when `t_final` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<f64>,
    #[serde(default = "default_tol")]
    pub fixed_point_tol: f64,
    #[serde(default = "default_max_inner")]
    pub max_inner_iter: usize,
    #[serde(default = "default_blowup")]
    pub blowup_threshold: f64,
    #[serde(default = "default_resolution")]
    pub resolution_limit: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dt: None,
            steps_per_period: None,
            t_final: None,
            periods: None,
            fixed_point_tol: default_tol(),
            max_inner_iter: default_max_inner(),
            blowup_threshold: default_blowup(),
            resolution_limit: default_resolution(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Reconstruction times in units of `T_B`.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default = "default_spacing")]
    pub max_spacing: f64,
    #[serde(default)]
    pub eigenfunctions: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir(), snapshots: Vec::new(), max_spacing: default_spacing(), eigenfunctions: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuppressionSection {
    #[serde(default)]
    pub metric: ContrastMetric,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Measure the threshold against the contrast of the exact linear beating.
    #[serde(default = "yes")]
    pub relative: bool,
}

impl Default for SuppressionSection {
    fn default() -> Self {
        Self { metric: ContrastMetric::Imbalance, threshold: default_threshold(), relative: true }
    }
}

fn yes() -> bool {
    true
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_inner() -> usize {
    200
}
fn default_blowup() -> f64 {
    1e6
}
fn default_resolution() -> f64 {
    0.5
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_spacing() -> f64 {
    0.1
}
fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path such as `mix.alpha`; empty for syntax errors.
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self { field: field.to_string(), line: None, message: message.into() }
    }

    /// Attaches the line of `self.field` in `source`, if it can be found.
    pub fn locate(mut self, source: &str) -> Self {
        if self.line.is_none() {
            self.line = find_line(source, &self.field);
        }
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if !self.field.is_empty() {
            write!(f, " in `{}`", self.field)?;
        }
        if let Some(l) = self.line {
            write!(f, " (line {l})")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of `table.key` (or of a top-level `key`, or of `[table]`).
fn find_line(source: &str, field: &str) -> Option<usize> {
    let (table, key) = match field.split_once('.') {
        Some((t, k)) => (t, k),
        None => ("", field),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == table || (table.is_empty() && current == key) {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

impl RunConfig {
    /// Parses and validates a TOML config.
    pub fn from_toml(source: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(source).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(source, s.start));
            ConfigError { field: String::new(), line, message: e.message().trim().to_string() }
        })?;
        cfg.validate().map_err(|e| e.locate(source))?;
        Ok(cfg)
    }

    /// Canonical TOML form: every field explicit, fixed order, shortest round-trip floats.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.well;
        if !(w.a.is_finite() && w.a > 0.0) {
            return Err(ConfigError::new("well.a", format!("half-separation must be positive, got {}", w.a)));
        }
        for (f, g) in [("well.gamma1", w.gamma1), ("well.gamma2", w.gamma2)] {
            if !(g.is_finite() && g < 0.0) {
                return Err(ConfigError::new(f, format!("well strength must be negative (attractive), got {g}")));
            }
        }
        let m = &self.mix;
        if !(m.alpha.is_finite() && m.beta.is_finite()) {
            return Err(ConfigError::new("mix.alpha", "mix weights must be finite"));
        }
        let norm = m.alpha * m.alpha + m.beta * m.beta;
        if (norm - 1.0).abs() > 1e-12 {
            return Err(ConfigError::new(
                "mix.alpha",
                format!("|alpha|^2 + |beta|^2 = {norm:.17} differs from 1 by more than 1e-12"),
            ));
        }
        match self.scenario {
            Scenario::LinearSymmetric if w.gamma1 != w.gamma2 => {
                return Err(ConfigError::new("well.gamma2", "linear_symmetric needs gamma1 == gamma2"));
            }
            Scenario::LinearAsymmetric if w.gamma1 == w.gamma2 => {
                return Err(ConfigError::new("well.gamma2", "linear_asymmetric needs gamma1 != gamma2"));
            }
            _ => {}
        }
        match (self.scenario, &self.nonlinearity) {
            (Scenario::Nonlinear, None) => {
                return Err(ConfigError::new("nonlinearity", "scenario `nonlinear` requires a [nonlinearity] table"));
            }
            (Scenario::Nonlinear, Some(n)) => {
                if !(n.sigma.is_finite() && n.sigma > 0.0) {
                    return Err(ConfigError::new("nonlinearity.sigma", format!("must be positive, got {}", n.sigma)));
                }
                if !(n.gamma0.is_finite() && n.gamma0 != 0.0) {
                    return Err(ConfigError::new("nonlinearity.gamma0", "must be finite and nonzero"));
                }
            }
            (_, Some(n)) if n.sigma != 0.0 => {
                return Err(ConfigError::new(
                    "nonlinearity.sigma",
                    "linear scenarios take sigma = 0; use scenario = \"nonlinear\"",
                ));
            }
            _ => {}
        }
        let s = &self.solver;
        if s.dt.is_some() && s.steps_per_period.is_some() {
            return Err(ConfigError::new("solver.dt", "give either dt or steps_per_period, not both"));
        }
        if s.t_final.is_some() && s.periods.is_some() {
            return Err(ConfigError::new("solver.t_final", "give either t_final or periods, not both"));
        }
        if let Some(dt) = s.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(ConfigError::new("solver.dt", format!("must be positive, got {dt}")));
            }
        }
        if s.steps_per_period == Some(0) {
            return Err(ConfigError::new("solver.steps_per_period", "must be positive"));
        }
        if let Some(t) = s.t_final {
            if !(t.is_finite() && t > 0.0) {
                return Err(ConfigError::new("solver.t_final", format!("must be positive, got {t}")));
            }
        }
        if let Some(p) = s.periods {
            if !(p.is_finite() && p > 0.0) {
                return Err(ConfigError::new("solver.periods", format!("must be positive, got {p}")));
            }
        }
        let positive = [
            ("solver.fixed_point_tol", s.fixed_point_tol),
            ("solver.blowup_threshold", s.blowup_threshold),
            ("solver.resolution_limit", s.resolution_limit),
            ("output.max_spacing", self.output.max_spacing),
            ("suppression.threshold", self.suppression.threshold),
        ];
        for (f, v) in positive {
            if !(v > 0.0) {
                return Err(ConfigError::new(f, format!("must be positive, got {v}")));
            }
        }
        if s.max_inner_iter == 0 {
            return Err(ConfigError::new("solver.max_inner_iter", "must be positive"));
        }
        if let Some(t) = self.output.snapshots.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(ConfigError::new("output.snapshots", format!("times must be non-negative, got {t}")));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.nonlinearity.map_or(0.0, |n| n.sigma)
    }

    /// Applies command-line overrides, then re-validates.
    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(a) = o.a {
            self.well.a = a;
        }
        if let Some(g) = o.gamma1 {
            self.well.gamma1 = g;
        }
        if let Some(g) = o.gamma2 {
            self.well.gamma2 = g;
        }
        if let Some((al, be)) = o.mix {
            self.mix = MixSection { alpha: al, beta: be };
        }
        if o.sigma.is_some() || o.gamma0.is_some() {
            let n = match (self.scenario, self.nonlinearity) {
                (Scenario::Nonlinear, Some(n)) => n,
                _ => {
                    let field = if o.sigma.is_some() { "nonlinearity.sigma" } else { "nonlinearity.gamma0" };
                    return Err(ConfigError::new(field, "override needs a nonlinear scenario"));
                }
            };
            self.nonlinearity = Some(NonlinearitySection {
                gamma0: o.gamma0.unwrap_or(n.gamma0),
                sigma: o.sigma.unwrap_or(n.sigma),
                ..n
            });
        }
        if o.dt.is_some() {
            self.solver.dt = o.dt;
            self.solver.steps_per_period = None;
        }
        if o.steps_per_period.is_some() {
            self.solver.steps_per_period = o.steps_per_period;
            self.solver.dt = None;
        }
        if o.t_final.is_some() {
            self.solver.t_final = o.t_final;
            self.solver.periods = None;
        }
        if o.periods.is_some() {
            self.solver.periods = o.periods;
            self.solver.t_final = None;
        }
        if let Some(r) = o.resolution_limit {
            self.solver.resolution_limit = r;
        }
        if let Some(b) = o.blowup_threshold {
            self.solver.blowup_threshold = b;
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        if let Some(s) = &o.snapshots {
            self.output.snapshots = s.clone();
        }
        if o.no_snapshots {
            self.output.snapshots.clear();
        }
        self.validate()
    }
}

/// Command-line overrides; `None` leaves the config value alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub a: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub mix: Option<(f64, f64)>,
    pub sigma: Option<f64>,
    pub gamma0: Option<f64>,
    pub dt: Option<f64>,
    pub steps_per_period: Option<u32>,
    pub t_final: Option<f64>,
    pub periods: Option<f64>,
    pub resolution_limit: Option<f64>,
    pub blowup_threshold: Option<f64>,
    pub out: Option<PathBuf>,
    pub snapshots: Option<Vec<f64>>,
    pub no_snapshots: bool,
}

/// Everything the runner needs, derived from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub well: WellConfig,
    pub linear: LinearBeating,
    pub psi0: InitialState,
    pub nonlinearity: Nonlinearity,
    /// `None` for linear runs.
    pub gamma_effective: Option<f64>,
    pub params: SolverParams,
    pub beating_period: f64,
}

impl Resolved {
    pub fn new(cfg: &RunConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let w = &cfg.well;
        let well = WellConfig::new(w.a, w.gamma1, w.gamma2).map_err(|e| ConfigError::new("well", e.to_string()))?;
        let linear = LinearBeating::new(&well, cfg.mix.alpha, cfg.mix.beta)
            .map_err(|e| ConfigError::new("well", format!("no beating pair: {e}")))?;
        let tb = beating_period(&linear.states.pair).map_err(|e| ConfigError::new("well", e.to_string()))?;
        let psi0 = linear.initial_state();
        let (nonlinearity, gamma_effective) = match cfg.nonlinearity {
            Some(n) if cfg.scenario == Scenario::Nonlinear => {
                let base = Nonlinearity::new(n.gamma0, n.sigma)
                    .map_err(|e| ConfigError::new("nonlinearity", e.to_string()))?;
                let g = if n.effective_gamma {
                    effective_gamma(&base, &psi0, &well)
                        .map_err(|e| ConfigError::new("nonlinearity.gamma0", e.to_string()))?
                } else {
                    n.gamma0
                };
                let nl = Nonlinearity::new(g, n.sigma).map_err(|e| ConfigError::new("nonlinearity", e.to_string()))?;
                (nl, Some(g))
            }
            _ => (Nonlinearity::linear(w.gamma1), None),
        };
        let s = &cfg.solver;
        let dt = s.dt.unwrap_or(tb / f64::from(s.steps_per_period.unwrap_or(DEFAULT_STEPS_PER_PERIOD)));
        let t_final = s.t_final.unwrap_or(tb * s.periods.unwrap_or(DEFAULT_PERIODS));
        let params = SolverParams {
            dt,
            t_final,
            fixed_point_tol: s.fixed_point_tol,
            max_inner_iter: s.max_inner_iter,
            blowup_threshold: s.blowup_threshold,
            resolution_limit: s.resolution_limit,
        };
        params.validate().map_err(|e| ConfigError::new("solver", e.to_string()))?;
        Ok(Self { well, linear, psi0, nonlinearity, gamma_effective, params, beating_period: tb })
    }

    pub fn mix(&self) -> (Complex64, Complex64) {
        (Complex64::new(self.linear.mix_alpha, 0.0), Complex64::new(self.linear.mix_beta, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
scenario = "linear_symmetric"

[well]
a = 3.0
gamma1 = -0.5
gamma2 = -0.5

[mix]
alpha = 0.6
beta = 0.8
"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.solver.fixed_point_tol, 1e-10);
        assert_eq!(c.suppression.threshold, 0.5);
        let r = Resolved::new(&c).unwrap();
        assert!((r.params.dt - r.beating_period / 2000.0).abs() < 1e-12);
        assert!((r.params.t_final - 6.0 * r.beating_period).abs() < 1e-9);
        assert_eq!(r.gamma_effective, None);
    }

    #[test]
    fn canonical_round_trip() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        let text = c.to_canonical();
        let again = RunConfig::from_toml(&text).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_canonical(), text);
        assert!(text.contains("[suppression]") && text.contains("max_inner_iter = 200"), "{text}");
    }

    #[test]
    fn mix_norm_is_checked_with_line() {
        let bad = MINIMAL.replace("beta = 0.8", "beta = 0.81");
        let e = RunConfig::from_toml(&bad).unwrap_err();
        assert_eq!(e.field, "mix.alpha");
        assert_eq!(e.line, Some(10));
        assert!(e.to_string().contains("line 10"));
    }

    #[test]
    fn unknown_key_reports_line() {
        let bad = MINIMAL.replace("a = 3.0", "a = 3.0\nwidth = 2");
        let e = RunConfig::from_toml(&bad).unwrap_err();
        assert_eq!(e.line, Some(6));
        assert!(e.message.contains("width"), "{e}");
    }

    #[test]
    fn scenario_requirements() {
        let e = RunConfig::from_toml(&MINIMAL.replace("linear_symmetric", "nonlinear")).unwrap_err();
        assert_eq!(e.field, "nonlinearity");
        let e = RunConfig::from_toml(&MINIMAL.replace("gamma2 = -0.5", "gamma2 = -0.7")).unwrap_err();
        assert_eq!((e.field.as_str(), e.line), ("well.gamma2", Some(7)));
        let e = RunConfig::from_toml(&MINIMAL.replace("linear_symmetric", "linear_asymmetric")).unwrap_err();
        assert_eq!(e.field, "well.gamma2");
    }

    #[test]
    fn sigma_override_needs_nonlinear_scenario() {
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        let o = Overrides { sigma: Some(0.7), ..Default::default() };
        assert_eq!(c.apply(&o).unwrap_err().field, "nonlinearity.sigma");
    }

    #[test]
    fn one_eigenvalue_well_is_rejected() {
        let c = RunConfig::from_toml(&MINIMAL.replace("a = 3.0", "a = 2.0")).unwrap();
        assert_eq!(Resolved::new(&c).unwrap_err().field, "well");
    }

    #[test]
    fn dt_and_steps_are_exclusive() {
        let text = format!("{MINIMAL}\n[solver]\ndt = 0.1\nsteps_per_period = 100\n");
        let e = RunConfig::from_toml(&text).unwrap_err();
        assert_eq!(e.field, "solver.dt");
        assert_eq!(e.line, Some(14));
    }
}
