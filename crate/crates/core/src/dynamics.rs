//! Wave-function reconstruction from the charges, densities, occupations and the
//! beating-suppression metric.
//!
//! Away from the wells the Duhamel formula gives
//! `psi(t, x) = (U(t) psi0)(x) - sum_j c_j int_0^t K_{b_j}(t - s) g(q_j(s)) ds`
//! with `b_j = (x - y_j)^2 / 4`; the memory integrals reuse the product weights of the
//! charge solver.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charges::{memory_prefactor, ChargeTrajectory, KernelWeights, LinearBeating};
use crate::freeprop::{free_evolve_unchecked, InitialState};
use crate::spectral::{EigenPair, WellConfig};
use crate::{Error, Result};

/// Uniform grid on `[-L, L]` with both wells `x = +-a` on nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub a: f64,
    pub spacing: f64,
    /// Nodes on each side of the origin; `L = half_nodes * spacing`.
    pub half_nodes: usize,
}

impl Grid {
    /// Grid with spacing at most `max_spacing`, shrunk so that `a / spacing` is integral,
    /// covering at least `[-half_width, half_width]`.
    pub fn new(a: f64, half_width: f64, max_spacing: f64) -> Result<Self> {
        if !(a > 0.0 && half_width > 0.0 && max_spacing > 0.0) {
            return Err(Error::Domain("grid needs positive a, half width and spacing".into()));
        }
        let per_a = (a / max_spacing).ceil().max(1.0);
        let spacing = a / per_a;
        let half_nodes = (half_width / spacing).ceil() as usize;
        Ok(Self { a, spacing, half_nodes })
    }

    /// Grid for `psi(t, .)` of data with decay rates in `[kappa_min, kappa_max]`.
    ///
    /// `L = max(10 a + 4 sqrt(t) max(1, kappa_max), a + 17 / kappa_min) + 2 kappa_max t`:
    /// the chirp and well region, the exponential tail down to `exp(-34)`, and the
    /// ballistic spread of radiation emitted at the bound-state momenta. The spacing
    /// resolves both the decay and the `x^2 / 4t` chirp and is capped at `max_spacing`.
    pub fn for_time(a: f64, t: f64, kappa_min: f64, kappa_max: f64, max_spacing: f64) -> Result<Self> {
        if !(kappa_min > 0.0 && kappa_max >= kappa_min && t >= 0.0) {
            return Err(Error::Domain("grid needs 0 < kappa_min <= kappa_max and t >= 0".into()));
        }
        let core = 10.0 * a + 4.0 * t.sqrt() * kappa_max.max(1.0);
        let half_width = core.max(a + 17.0 / kappa_min) + 2.0 * kappa_max * t;
        let mut h = max_spacing.min(1.0 / (4.0 * kappa_max));
        if t > 0.0 {
            h = h.min(PI * t.sqrt() / (2.0 * half_width));
        }
        Self::new(a, half_width, h)
    }

    /// `for_time` with the decay rates of `psi0`.
    pub fn for_state(a: f64, t: f64, psi0: &InitialState, max_spacing: f64) -> Result<Self> {
        let kmin = psi0.terms.iter().map(|t| t.kappa).fold(f64::INFINITY, f64::min);
        Self::for_time(a, t, kmin, psi0.kappa_max(), max_spacing)
    }

    pub fn half_width(&self) -> f64 {
        self.half_nodes as f64 * self.spacing
    }

    pub fn len(&self) -> usize {
        2 * self.half_nodes + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, k: usize) -> f64 {
        (k as f64 - self.half_nodes as f64) * self.spacing
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.x(k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub t: f64,
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn sample<F: Fn(f64) -> Complex64>(grid: Grid, t: f64, f: F) -> Self {
        Self { values: grid.points().map(f).collect(), grid, t }
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Composite Simpson on uniform samples, closing with the 3/8 rule when the interval
/// count is odd.
fn simpson(h: f64, f: &[f64]) -> f64 {
    let n = f.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * h * (f[0] + f[1]),
        _ => {
            let (even, tail) = if n % 2 == 0 { (n, 0.0) } else { (n - 3, 0.375 * h * (f[n - 3] + 3.0 * f[n - 2] + 3.0 * f[n - 1] + f[n])) };
            let mut acc = f[0] + f[even];
            for k in 1..even {
                acc += if k % 2 == 1 { 4.0 * f[k] } else { 2.0 * f[k] };
            }
            acc * h / 3.0 + tail
        }
    }
}

/// `int |psi|^2` over `[x_lo, x_hi]` (node indices), split at the kinks `x = +-a`.
fn integrate_density(g: &Grid, d: &[f64], lo: usize, hi: usize) -> f64 {
    let per_a = (g.a / g.spacing).round() as usize;
    let mut cuts = vec![lo];
    for k in [g.half_nodes - per_a.min(g.half_nodes), g.half_nodes + per_a] {
        if k > lo && k < hi {
            cuts.push(k);
        }
    }
    cuts.push(hi);
    cuts.windows(2).map(|w| simpson(g.spacing, &d[w[0]..=w[1]])).sum()
}

/// Grid `L2` norm squared.
pub fn mass(gf: &GridFunction) -> f64 {
    integrate_density(&gf.grid, &gf.density(), 0, gf.grid.len() - 1)
}

/// `int_{x<0} |psi|^2` or `int_{x>0} |psi|^2`.
pub fn well_occupation(gf: &GridFunction, side: Side) -> Result<f64> {
    let g = gf.grid;
    if g.half_width() < 10.0 * g.a - 1e-9 * g.a {
        return Err(Error::Domain(format!(
            "grid half width {} does not cover 10 a = {}",
            g.half_width(),
            10.0 * g.a
        )));
    }
    let d = gf.density();
    let mid = g.half_nodes;
    Ok(match side {
        Side::Left => integrate_density(&g, &d, 0, mid),
        Side::Right => integrate_density(&g, &d, mid, g.len() - 1),
    })
}

/// Memory term `sum_j c_j int_0^{t_n} K_{b_j}(t_n - s) g(q_j(s)) ds` at `x`.
fn memory_term(traj: &ChargeTrajectory, centers: [f64; 2], g: &[Vec<Complex64>; 2], n: usize, x: f64) -> Complex64 {
    let pref = memory_prefactor();
    let strengths = [traj.strengths.0, traj.strengths.1];
    let mut total = Complex64::new(0.0, 0.0);
    for j in 0..2 {
        let d = x - centers[j];
        let kw = KernelWeights::new(0.25 * d * d, traj.dt, n);
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..=n {
            acc += kw.lag_weight(m, n) * g[j][n - m];
        }
        total += pref * strengths[j] * acc;
    }
    total
}

fn nonlinear_history(traj: &ChargeTrajectory, upto: usize) -> [Vec<Complex64>; 2] {
    let s = traj.sigma;
    let g = |q: &Complex64| if s == 0.0 { *q } else { q * q.norm_sqr().powf(s) };
    [traj.q1[..=upto].iter().map(g).collect(), traj.q2[..=upto].iter().map(g).collect()]
}

/// `psi(t, x)` at a single point; `t` must be a node of the trajectory grid.
pub fn reconstruct_at(traj: &ChargeTrajectory, cfg: &WellConfig, psi0: &InitialState, t: f64, x: f64) -> Result<Complex64> {
    let n = traj.index_of(t)?;
    if n == 0 {
        return Ok(psi0.eval(x));
    }
    let g = nonlinear_history(traj, n);
    let t = n as f64 * traj.dt;
    Ok(free_evolve_unchecked(psi0, t, x) - memory_term(traj, cfg.centers(), &g, n, x))
}

/// `psi(t, .)` on `grid`; `t` must be a node of the trajectory grid.
pub fn reconstruct(traj: &ChargeTrajectory, cfg: &WellConfig, psi0: &InitialState, t: f64, grid: Grid) -> Result<GridFunction> {
    let n = traj.index_of(t)?;
    if n == 0 {
        return Ok(GridFunction::sample(grid, 0.0, |x| psi0.eval(x)));
    }
    let g = nonlinear_history(traj, n);
    let t = n as f64 * traj.dt;
    let centers = cfg.centers();
    Ok(GridFunction::sample(grid, t, |x| free_evolve_unchecked(psi0, t, x) - memory_term(traj, centers, &g, n, x)))
}

/// `|alpha phi_f e^{i lambda_f t} + beta phi_e e^{i lambda_e t}|^2`.
pub fn exact_density(lin: &LinearBeating, t: f64, x: f64) -> f64 {
    let f = lin.states.fundamental.eval(x) * lin.mix_alpha;
    let e = lin.states.excited.eval(x) * lin.mix_beta;
    f * f + e * e + 2.0 * f * e * (lin.states.pair.delta_lambda * t).cos()
}

pub fn beating_density_exact(cfg: &WellConfig, mix_alpha: f64, mix_beta: f64, t: f64, x: f64) -> Result<f64> {
    Ok(exact_density(&LinearBeating::new(cfg, mix_alpha, mix_beta)?, t, x))
}

/// `T_B = 2 pi / delta_lambda`.
pub fn beating_period(pair: &EigenPair) -> Result<f64> {
    if !(pair.delta_lambda > 0.0) {
        return Err(Error::NoBeating { delta_lambda: pair.delta_lambda });
    }
    Ok(2.0 * PI / pair.delta_lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContrastMetric {
    /// Half the swing of the well imbalance `(|q1|^2 - |q2|^2) / (|q1|^2 + |q2|^2)`.
    #[default]
    Imbalance,
    /// `(max |q1|^2 - min |q1|^2) / (max |q1|^2 + min |q1|^2)`.
    LeftDensity,
}

impl ContrastMetric {
    fn window_value(self, q1: &[Complex64], q2: &[Complex64]) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (a, b) in q1.iter().zip(q2) {
            let v = match self {
                ContrastMetric::Imbalance => {
                    let (l, r) = (a.norm_sqr(), b.norm_sqr());
                    if l + r > 0.0 {
                        (l - r) / (l + r)
                    } else {
                        0.0
                    }
                }
                ContrastMetric::LeftDensity => a.norm_sqr(),
            };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        match self {
            ContrastMetric::Imbalance => 0.5 * (hi - lo),
            ContrastMetric::LeftDensity if hi + lo > 0.0 => (hi - lo) / (hi + lo),
            ContrastMetric::LeftDensity => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionReport {
    pub metric: ContrastMetric,
    pub window: f64,
    pub stride: f64,
    pub window_centers: Vec<f64>,
    pub contrasts: Vec<f64>,
    pub threshold: f64,
    /// Contrast of the undamped linear beating; when present the threshold is relative to it.
    pub reference_contrast: Option<f64>,
    pub effective_threshold: f64,
    pub suppression_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuppressionOptions {
    pub metric: ContrastMetric,
    pub threshold: f64,
    pub reference_contrast: Option<f64>,
    /// Window advance as a fraction of `T_B`.
    pub stride_fraction: f64,
}

impl Default for SuppressionOptions {
    fn default() -> Self {
        Self { metric: ContrastMetric::Imbalance, threshold: 0.5, reference_contrast: None, stride_fraction: 0.1 }
    }
}

/// Sliding-window contrast of the charges, windows one beating period wide.
pub fn suppression_report(traj: &ChargeTrajectory, pair: &EigenPair, opts: &SuppressionOptions) -> Result<SuppressionReport> {
    let tb = beating_period(pair)?;
    let dt = traj.dt;
    let width = (tb / dt).round() as usize;
    if width == 0 || width + 1 > traj.len() {
        return Err(Error::Domain(format!(
            "window T_B = {tb} longer than trajectory span {}",
            traj.last_time()
        )));
    }
    if !(opts.threshold > 0.0 && opts.stride_fraction > 0.0) {
        return Err(Error::Domain("threshold and stride must be positive".into()));
    }
    let stride = ((opts.stride_fraction * tb / dt).round() as usize).max(1);
    let effective = opts.threshold * opts.reference_contrast.unwrap_or(1.0);
    let mut centers = Vec::new();
    let mut contrasts = Vec::new();
    let mut start = 0;
    while start + width < traj.len() {
        let end = start + width + 1;
        centers.push((start as f64 + 0.5 * width as f64) * dt);
        contrasts.push(opts.metric.window_value(&traj.q1[start..end], &traj.q2[start..end]));
        start += stride;
    }
    let suppression_time = centers.iter().zip(&contrasts).find(|(_, &c)| c < effective).map(|(&t, _)| t);
    Ok(SuppressionReport {
        metric: opts.metric,
        window: width as f64 * dt,
        stride: stride as f64 * dt,
        window_centers: centers,
        contrasts,
        threshold: opts.threshold,
        reference_contrast: opts.reference_contrast,
        effective_threshold: effective,
        suppression_time,
    })
}

/// Contrast of the exact linear beating over one period, sampled at `samples` points.
pub fn linear_reference_contrast(lin: &LinearBeating, metric: ContrastMetric, samples: usize) -> f64 {
    let tb = 2.0 * PI / lin.states.pair.delta_lambda;
    let (q1, q2): (Vec<_>, Vec<_>) = (0..=samples).map(|k| lin.charges(tb * k as f64 / samples as f64)).unzip();
    metric.window_value(&q1, &q2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charges::{solve_charges, Nonlinearity, SolverParams};
    use crate::spectral::beating_states;

    fn figure_cfg() -> WellConfig {
        WellConfig::symmetric(3.0, -0.5).unwrap()
    }

    #[test]
    fn grid_places_wells_on_nodes() {
        let g = Grid::new(3.0, 30.0, 0.07).unwrap();
        assert!(g.spacing <= 0.07);
        let k = g.half_nodes + (3.0 / g.spacing).round() as usize;
        assert!((g.x(k) - 3.0).abs() < 1e-12);
        assert!(g.half_width() >= 30.0);
        assert_eq!(g.x(g.half_nodes), 0.0);
        let g = Grid::for_time(3.0, 100.0, 0.15, 0.3, 0.1).unwrap();
        assert!(g.half_width() >= (30.0f64 + 40.0).max(3.0 + 17.0 / 0.15) + 60.0);
        assert!(g.spacing <= PI * 10.0 / (2.0 * g.half_width()));
        assert!(Grid::for_time(3.0, 1.0, 0.0, 0.3, 0.1).is_err());
    }

    #[test]
    fn period_definition_and_scaling() {
        let p = EigenPair { lambda0: 3.0 * PI, lambda1: PI, delta_lambda: 2.0 * PI };
        assert!((beating_period(&p).unwrap() - 1.0).abs() < 1e-15);
        let q = EigenPair { lambda0: 5.0 * PI, lambda1: PI, delta_lambda: 4.0 * PI };
        assert!((beating_period(&q).unwrap() - 0.5).abs() < 1e-15);
        let flat = EigenPair { lambda0: 1.0, lambda1: 1.0, delta_lambda: 0.0 };
        assert!(matches!(beating_period(&flat), Err(Error::NoBeating { .. })));
    }

    #[test]
    fn exact_density_normalized_and_swaps_wells() {
        let cfg = figure_cfg();
        let h = 0.5f64.sqrt();
        let lin = LinearBeating::new(&cfg, h, h).unwrap();
        let tb = beating_period(&lin.states.pair).unwrap();
        let grid = Grid::new(3.0, 120.0, 0.01).unwrap();
        for t in [0.0, 0.3 * tb, 0.5 * tb] {
            let gf = GridFunction::sample(grid, t, |x| Complex64::new(exact_density(&lin, t, x).sqrt(), 0.0));
            assert!((mass(&gf) - 1.0).abs() < 1e-6, "t={t}: {}", mass(&gf));
        }
        let at0 = GridFunction::sample(grid, 0.0, |x| Complex64::new(exact_density(&lin, 0.0, x).sqrt(), 0.0));
        let half = GridFunction::sample(grid, 0.5 * tb, |x| Complex64::new(exact_density(&lin, 0.5 * tb, x).sqrt(), 0.0));
        let left0 = well_occupation(&at0, Side::Left).unwrap();
        let right_half = well_occupation(&half, Side::Right).unwrap();
        assert!(left0 > 0.9, "{left0}");
        assert!((left0 - right_half).abs() < 1e-2 * left0);
        let right0 = well_occupation(&at0, Side::Right).unwrap();
        assert!((left0 + right0 - mass(&at0)).abs() < 1e-12);
    }

    #[test]
    fn occupation_needs_wide_grid() {
        let g = Grid::new(3.0, 20.0, 0.1).unwrap();
        let gf = GridFunction::sample(g, 0.0, |_| Complex64::new(0.0, 0.0));
        assert!(well_occupation(&gf, Side::Left).is_err());
    }

    #[test]
    fn stationary_state_splits_evenly() {
        let cfg = figure_cfg();
        let s = beating_states(&cfg).unwrap();
        let grid = Grid::new(3.0, 120.0, 0.01).unwrap();
        let gf = GridFunction::sample(grid, 0.0, |x| Complex64::new(s.fundamental.eval(x), 0.0));
        let l = well_occupation(&gf, Side::Left).unwrap();
        let r = well_occupation(&gf, Side::Right).unwrap();
        assert!((l - r).abs() < 1e-12 && (l - 0.5).abs() < 1e-5);
    }

    #[test]
    fn reconstruction_reproduces_charges_at_the_wells() {
        let cfg = figure_cfg();
        let lin = LinearBeating::new(&cfg, 0.1, 0.99f64.sqrt()).unwrap();
        let psi0 = lin.initial_state();
        let nl = Nonlinearity::new(-1.0, 0.3).unwrap();
        let traj = solve_charges(&cfg, &nl, &psi0, &SolverParams::new(0.1, 12.0)).unwrap();
        for n in [1usize, 7, 60, 120] {
            let t = traj.times[n];
            let l = reconstruct_at(&traj, &cfg, &psi0, t, -3.0).unwrap();
            let r = reconstruct_at(&traj, &cfg, &psi0, t, 3.0).unwrap();
            assert!((l - traj.q1[n]).norm() < 1e-9, "n={n}: {l} vs {}", traj.q1[n]);
            assert!((r - traj.q2[n]).norm() < 1e-9);
        }
        assert!(matches!(reconstruct_at(&traj, &cfg, &psi0, 0.05, 0.0), Err(Error::OffGrid { .. })));
        assert!(matches!(reconstruct_at(&traj, &cfg, &psi0, 50.0, 0.0), Err(Error::OffGrid { .. })));
    }

    #[test]
    fn zero_coupling_reconstruction_is_free_evolution() {
        let cfg = figure_cfg();
        let lin = LinearBeating::new(&cfg, 0.6, 0.8).unwrap();
        let psi0 = lin.initial_state();
        let traj = solve_charges(&cfg, &Nonlinearity::linear(0.0), &psi0, &SolverParams::new(0.5, 5.0)).unwrap();
        let grid = Grid::new(3.0, 10.0, 0.5).unwrap();
        let gf = reconstruct(&traj, &cfg, &psi0, 5.0, grid).unwrap();
        for (k, v) in gf.values.iter().enumerate() {
            assert_eq!(*v, free_evolve_unchecked(&psi0, 5.0, grid.x(k)));
        }
    }

    #[test]
    fn linear_suppression_report_is_flat() {
        let cfg = figure_cfg();
        let lin = LinearBeating::new(&cfg, 0.1, 0.99f64.sqrt()).unwrap();
        let tb = beating_period(&lin.states.pair).unwrap();
        let dt = tb / 400.0;
        let mut traj = ChargeTrajectory {
            dt,
            times: vec![],
            q1: vec![],
            q2: vec![],
            inner_iters: vec![],
            residuals: vec![],
            strengths: (-0.5, -0.5),
            sigma: 0.0,
            outcome: crate::charges::Outcome::Completed,
        };
        for n in 0..=1600 {
            let t = n as f64 * dt;
            let (a, b) = lin.charges(t);
            traj.times.push(t);
            traj.q1.push(a);
            traj.q2.push(b);
            traj.inner_iters.push(0);
            traj.residuals.push(0.0);
        }
        let reference = linear_reference_contrast(&lin, ContrastMetric::Imbalance, 4000);
        let opts = SuppressionOptions { reference_contrast: Some(reference), ..Default::default() };
        let rep = suppression_report(&traj, &lin.states.pair, &opts).unwrap();
        assert!(rep.suppression_time.is_none());
        assert!(rep.contrasts.iter().all(|c| (c - reference).abs() < 1e-3 * reference));
        assert!(rep.contrasts.iter().all(|&c| (0.0..=1.0).contains(&c)));

        let still = LinearBeating::new(&cfg, 1.0, 0.0).unwrap();
        for n in 0..=1600 {
            let (a, b) = still.charges(n as f64 * dt);
            traj.q1[n] = a;
            traj.q2[n] = b;
        }
        for metric in [ContrastMetric::Imbalance, ContrastMetric::LeftDensity] {
            let rep = suppression_report(&traj, &lin.states.pair, &SuppressionOptions { metric, ..Default::default() }).unwrap();
            assert!(rep.contrasts.iter().all(|&c| c < 1e-12));
            assert_eq!(rep.suppression_time, Some(rep.window_centers[0]));
        }
        traj.times.truncate(300);
        traj.q1.truncate(300);
        traj.q2.truncate(300);
        assert!(suppression_report(&traj, &lin.states.pair, &SuppressionOptions::default()).is_err());
    }
}
