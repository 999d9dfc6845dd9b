//! The charge equations: a weakly singular Volterra system for `q1(t) = psi(t, -a)` and
//! `q2(t) = psi(t, a)`,
//!
//! ```text
//! q_i(t) + sum_j c_j int_0^t K_{b_ij}(t - s) g(q_j(s)) ds = (U(t) psi0)(y_i),
//! K_b(u) = exp(i b / u) / sqrt(u),   c_j = (gamma_j / 2) sqrt(i / pi),   g(q) = q |q|^(2 sigma)
//! ```
//!
//! with `b_ii = 0` and `b_12 = a^2`. The memory integrals are discretized by product
//! integration: `g` is taken piecewise linear in time and integrated exactly against the
//! kernel, whose moments are known in closed form.

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::faddeeva::faddeeva_upper;
use crate::freeprop::{free_evolve_unchecked, InitialState};
use crate::spectral::{beating_states, BeatingStates, WellConfig};
use crate::{Error, Result};

const DAMPING: f64 = 0.5;
const STALL_LIMIT: usize = 20;
const GL4: [(f64, f64); 2] = [
    (0.339_981_043_584_856_26, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    /// Coupling at the left well; the right well gets `ratio_alpha` times it.
    pub gamma: f64,
    pub sigma: f64,
}

impl Nonlinearity {
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::Domain(format!("gamma must be finite, got {gamma}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be non-negative, got {sigma}")));
        }
        Ok(Self { gamma, sigma })
    }

    pub fn linear(gamma: f64) -> Self {
        Self { gamma, sigma: 0.0 }
    }

    pub fn is_linear(&self) -> bool {
        self.sigma == 0.0
    }

    /// `q |q|^(2 sigma)`
    pub fn g(&self, q: Complex64) -> Complex64 {
        if self.sigma == 0.0 {
            q
        } else {
            q * q.norm_sqr().powf(self.sigma)
        }
    }

    /// Wirtinger derivatives `(dg/dq, dg/dconj(q))`.
    fn dg(&self, q: Complex64) -> (Complex64, Complex64) {
        let s = self.sigma;
        let r2 = q.norm_sqr();
        if s == 0.0 {
            return (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        }
        if r2 == 0.0 {
            return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        }
        let p = r2.powf(s);
        (Complex64::new((1.0 + s) * p, 0.0), q * q * (s * p / r2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub dt: f64,
    pub t_final: f64,
    pub fixed_point_tol: f64,
    pub max_inner_iter: usize,
    pub blowup_threshold: f64,
    /// Largest accepted `dt kappa^2` with `kappa = |gamma_i| |q_i|^(2 sigma) / 2`, the
    /// decay rate of the instantaneous bound state; beyond it the step no longer
    /// resolves the local dynamics.
    #[serde(default = "default_resolution_limit")]
    pub resolution_limit: f64,
}

fn default_resolution_limit() -> f64 {
    0.5
}

impl SolverParams {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self {
            dt,
            t_final,
            fixed_point_tol: 1e-10,
            max_inner_iter: 200,
            blowup_threshold: 1e6,
            resolution_limit: default_resolution_limit(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(Error::Domain(format!("t_final {} must be at least dt {}", self.t_final, self.dt)));
        }
        if !(self.fixed_point_tol > 0.0) {
            return Err(Error::Domain("fixed_point_tol must be positive".into()));
        }
        if self.max_inner_iter == 0 {
            return Err(Error::Domain("max_inner_iter must be positive".into()));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::Domain("blowup_threshold must be positive".into()));
        }
        if !(self.resolution_limit > 0.0) {
            return Err(Error::Domain("resolution_limit must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps; `t_final` is rounded to the nearest multiple of `dt`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    BlowUp { time: f64 },
    /// The charges grew until `dt` stopped resolving the instantaneous bound state.
    /// `time` is the first unresolved step; the trajectory ends one step earlier.
    Unresolved { time: f64, resolution: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub q1: Vec<Complex64>,
    pub q2: Vec<Complex64>,
    pub inner_iters: Vec<u32>,
    pub residuals: Vec<f64>,
    /// Strengths multiplying `g(q)` at each well.
    pub strengths: (f64, f64),
    pub sigma: f64,
    pub outcome: Outcome,
}

impl ChargeTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Index of `t` on the time grid, refusing off-grid times.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let n = (t / self.dt).round();
        if n < 0.0 || (t - n * self.dt).abs() > 1e-9 * self.dt.max(t.abs()) || n as usize >= self.len() {
            return Err(Error::OffGrid { time: t, dt: self.dt });
        }
        Ok(n as usize)
    }

    pub fn max_inner_iters(&self) -> u32 {
        self.inner_iters.iter().copied().max().unwrap_or(0)
    }
}

/// `(int_0^u K_b, int_0^u s K_b(s) ds)` for `K_b(s) = exp(i b / s) / sqrt(s)`.
pub fn kernel_antiderivative(b: f64, u: f64) -> (Complex64, Complex64) {
    if u <= 0.0 {
        return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    }
    let su = u.sqrt();
    let phase = Complex64::from_polar(1.0, b / u);
    let mut p0 = 2.0 * su * phase;
    if b > 0.0 {
        let e = Complex64::from_polar(1.0, FRAC_PI_4);
        let w = faddeeva_upper(e * (b / u).sqrt());
        p0 += Complex64::new(0.0, 2.0 * (PI * b).sqrt()) * e * phase * w;
    }
    let p1 = (2.0 / 3.0) * u * su * phase + Complex64::new(0.0, 2.0 * b / 3.0) * p0;
    (p0, p1)
}

/// Product-integration weights of `K_b` for piecewise-linear data on a uniform grid.
///
/// Interval `j` is `u in [j dt, (j+1) dt]` with `u = t - s`; `alpha[j]` multiplies the
/// datum at `u = j dt` and `beta[j]` the datum at `u = (j+1) dt`.
#[derive(Debug, Clone)]
pub struct KernelWeights {
    pub b: f64,
    pub dt: f64,
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
}

impl KernelWeights {
    pub fn new(b: f64, dt: f64, intervals: usize) -> Self {
        let mut alpha = Vec::with_capacity(intervals);
        let mut beta = Vec::with_capacity(intervals);
        if b == 0.0 {
            let scale = dt.sqrt();
            for j in 0..intervals {
                let p = (j as f64).sqrt();
                let q = ((j + 1) as f64).sqrt();
                let d = 1.0 / (q + p);
                alpha.push(Complex64::new(scale * (2.0 / 3.0) * d * d * (2.0 * q + p), 0.0));
                beta.push(Complex64::new(scale * (2.0 / 3.0) * d * d * (q + 2.0 * p), 0.0));
            }
        } else {
            let mut prev = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            let mut prev_u = 0.0;
            for j in 0..intervals {
                let lo = j as f64 * dt;
                let hi = (j + 1) as f64 * dt;
                let smooth = j >= 16 && b * dt / (lo * hi) < 0.25;
                let (i0, i1) = if smooth {
                    // Differences of the antiderivatives cancel badly here; the kernel is
                    // smooth on the interval, so Gauss-Legendre is exact to rounding.
                    let mid = 0.5 * (lo + hi);
                    let half = 0.5 * dt;
                    let mut i0 = Complex64::new(0.0, 0.0);
                    let mut i1 = Complex64::new(0.0, 0.0);
                    for (x, w) in GL4 {
                        for u in [mid - half * x, mid + half * x] {
                            let k = Complex64::from_polar(w * half / u.sqrt(), b / u);
                            i0 += k;
                            i1 += k * (u - lo);
                        }
                    }
                    (i0, i1)
                } else {
                    if prev_u != lo {
                        prev = kernel_antiderivative(b, lo);
                    }
                    let next = kernel_antiderivative(b, hi);
                    let i0 = next.0 - prev.0;
                    let i1 = next.1 - prev.1 - lo * i0;
                    prev = next;
                    prev_u = hi;
                    (i0, i1)
                };
                let bj = i1 / dt;
                alpha.push(i0 - bj);
                beta.push(bj);
            }
        }
        Self { b, dt, alpha, beta }
    }

    pub fn intervals(&self) -> usize {
        self.alpha.len()
    }

    /// Weight of the datum `m` steps in the past when integrating over `n` steps.
    #[inline]
    pub fn lag_weight(&self, m: usize, n: usize) -> Complex64 {
        debug_assert!(n >= 1 && m <= n && n <= self.intervals());
        if m == 0 {
            self.alpha[0]
        } else if m == n {
            self.beta[n - 1]
        } else {
            self.alpha[m] + self.beta[m - 1]
        }
    }

    /// Weights `w_k` such that `sum_k w_k f(t_k)` integrates over `[0, t_n]`.
    pub fn node_weights(&self, n: usize) -> Vec<Complex64> {
        (0..=n).map(|k| self.lag_weight(n - k, n)).collect()
    }
}

fn check_grid(n: usize, dt: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

/// Weights for `int_0^{t_n} f(s) (t_n - s)^(-1/2) ds`, indexed by time node.
pub fn abel_weights(n: usize, dt: f64) -> Result<Vec<f64>> {
    check_grid(n, dt)?;
    Ok(KernelWeights::new(0.0, dt, n).node_weights(n).into_iter().map(|w| w.re).collect())
}

/// Weights for `int_0^{t_n} f(s) exp(i a^2 / (t_n - s)) (t_n - s)^(-1/2) ds`, indexed by time node.
pub fn cross_kernel_moments(n: usize, dt: f64, a: f64) -> Result<Vec<Complex64>> {
    check_grid(n, dt)?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("a must be non-negative, got {a}")));
    }
    Ok(KernelWeights::new(a * a, dt, n).node_weights(n))
}

/// `sqrt(i / pi) / 2`, the factor turning a strength into the memory-term coefficient.
pub fn memory_prefactor() -> Complex64 {
    Complex64::from_polar(0.5 / PI.sqrt(), FRAC_PI_4)
}

/// Strengths at the two wells for a given nonlinearity: `gamma` on the left,
/// `gamma * ratio_alpha` on the right.
pub fn well_strengths(cfg: &WellConfig, nl: &Nonlinearity) -> (f64, f64) {
    (nl.gamma, nl.gamma * cfg.ratio_alpha())
}

struct StepSystem<'a> {
    nl: &'a Nonlinearity,
    // coefficient of g(q1) and g(q2) in equation 1 and 2 at the current step
    a11: Complex64,
    a12: Complex64,
    a21: Complex64,
    a22: Complex64,
    rhs: [Complex64; 2],
}

impl StepSystem<'_> {
    fn residual(&self, q: [Complex64; 2]) -> [Complex64; 2] {
        let g1 = self.nl.g(q[0]);
        let g2 = self.nl.g(q[1]);
        // coupling sums grouped so that the two rows mirror each other bitwise
        let (m1, m2) = (self.a11 * g1 + self.a12 * g2, self.a21 * g1 + self.a22 * g2);
        [q[0] + m1 - self.rhs[0], q[1] + m2 - self.rhs[1]]
    }

    fn fixed_point(&self, q: [Complex64; 2]) -> [Complex64; 2] {
        let g1 = self.nl.g(q[0]);
        let g2 = self.nl.g(q[1]);
        let t1 = self.rhs[0] - (self.a11 * g1 + self.a12 * g2);
        let t2 = self.rhs[1] - (self.a21 * g1 + self.a22 * g2);
        [(1.0 - DAMPING) * q[0] + DAMPING * t1, (1.0 - DAMPING) * q[1] + DAMPING * t2]
    }

    fn newton(&self, q: [Complex64; 2]) -> Option<[Complex64; 2]> {
        let r = self.residual(q);
        let (d1, e1) = self.nl.dg(q[0]);
        let (d2, e2) = self.nl.dg(q[1]);
        // dF_i = A_ij dq_j + B_ij conj(dq_j)
        let one = Complex64::new(1.0, 0.0);
        let a = [[one + self.a11 * d1, self.a12 * d2], [self.a21 * d1, one + self.a22 * d2]];
        let b = [[self.a11 * e1, self.a12 * e2], [self.a21 * e1, self.a22 * e2]];
        // 2x2 real blocks; columns d/d(re q_j) = A + B, d/d(im q_j) = i (A - B)
        let block = |i: usize, j: usize| {
            let dre = a[i][j] + b[i][j];
            let dim = Complex64::i() * (a[i][j] - b[i][j]);
            [[dre.re, dim.re], [dre.im, dim.im]]
        };
        let (j11, j12, j21, j22) = (block(0, 0), block(0, 1), block(1, 0), block(1, 1));
        // Solve in sum/difference coordinates (rows r1 +- r2, unknowns dq1 = du + dv,
        // dq2 = du - dv). For mirror-symmetric data the off-diagonal blocks vanish
        // exactly, so symmetric iterates stay bitwise symmetric; plain LU pivoting
        // would seed an asymmetry that the nonlinearity can amplify.
        let mut jac = Matrix4::<f64>::zeros();
        for r in 0..2 {
            for c in 0..2 {
                jac[(r, c)] = (j11[r][c] + j12[r][c]) + (j21[r][c] + j22[r][c]);
                jac[(r, c + 2)] = (j11[r][c] - j12[r][c]) + (j21[r][c] - j22[r][c]);
                jac[(r + 2, c)] = (j11[r][c] + j12[r][c]) - (j21[r][c] + j22[r][c]);
                jac[(r + 2, c + 2)] = (j11[r][c] - j12[r][c]) - (j21[r][c] - j22[r][c]);
            }
        }
        let (s, d) = (r[0] + r[1], r[0] - r[1]);
        let rhs = Vector4::new(-s.re, -s.im, -d.re, -d.im);
        let z = jac.lu().solve(&rhs)?;
        let (du, dv) = (Complex64::new(z[0], z[1]), Complex64::new(z[2], z[3]));
        Some([q[0] + (du + dv), q[1] + (du - dv)])
    }
}

fn max_norm(r: [Complex64; 2]) -> f64 {
    r[0].norm().max(r[1].norm())
}

fn finite(q: [Complex64; 2]) -> bool {
    q.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Resolves the current-step values: damped fixed point, then backtracking Newton once
/// the fixed point has run `STALL_LIMIT` iterations or stopped contracting.
fn solve_step(sys: &StepSystem, guess: [Complex64; 2], tol: f64, max_iter: usize) -> (Option<[Complex64; 2]>, u32, f64) {
    let mut q = guess;
    let mut res = max_norm(sys.residual(q));
    let mut iters = 0usize;
    let mut use_newton = false;
    while iters < max_iter {
        if res < tol {
            return (Some(q), iters as u32, res);
        }
        iters += 1;
        if !use_newton {
            let next = sys.fixed_point(q);
            let next_res = max_norm(sys.residual(next));
            if finite(next) && next_res < res {
                q = next;
                res = next_res;
                use_newton = iters >= STALL_LIMIT;
            } else {
                use_newton = true;
            }
            continue;
        }
        let Some(full) = sys.newton(q) else {
            return (None, iters as u32, res);
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = [q[0] + (full[0] - q[0]) * step, q[1] + (full[1] - q[1]) * step];
            let trial_res = max_norm(sys.residual(trial));
            if finite(trial) && trial_res < res {
                q = trial;
                res = trial_res;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return (None, iters as u32, res);
        }
    }
    if res < tol {
        (Some(q), iters as u32, res)
    } else {
        (None, iters as u32, res)
    }
}

/// `dt kappa^2` for the stiffer of the two instantaneous point interactions.
fn step_resolution(dt: f64, strengths: (f64, f64), sigma: f64, q: [Complex64; 2]) -> f64 {
    let k1 = 0.5 * strengths.0.abs() * q[0].norm_sqr().powf(sigma);
    let k2 = 0.5 * strengths.1.abs() * q[1].norm_sqr().powf(sigma);
    dt * k1.max(k2).powi(2)
}

/// Marches the charge equations from `t = 0` to `params.t_final`.
///
/// Returns the partial trajectory with `Outcome::BlowUp` when a charge exceeds
/// `params.blowup_threshold`, and with `Outcome::Unresolved` when the growth of the
/// charges outruns the step size.
pub fn solve_charges(
    cfg: &WellConfig,
    nl: &Nonlinearity,
    psi0: &InitialState,
    params: &SolverParams,
) -> Result<ChargeTrajectory> {
    params.validate()?;
    let steps = params.steps();
    let dt = params.dt;
    let [y1, y2] = cfg.centers();
    let (s1, s2) = well_strengths(cfg, nl);
    let pref = memory_prefactor();
    let c1 = pref * s1;
    let c2 = pref * s2;

    let selfw = KernelWeights::new(0.0, dt, steps);
    let cross = KernelWeights::new(cfg.a * cfg.a, dt, steps);

    let mut traj = ChargeTrajectory {
        dt,
        times: Vec::with_capacity(steps + 1),
        q1: Vec::with_capacity(steps + 1),
        q2: Vec::with_capacity(steps + 1),
        inner_iters: Vec::with_capacity(steps + 1),
        residuals: Vec::with_capacity(steps + 1),
        strengths: (s1, s2),
        sigma: nl.sigma,
        outcome: Outcome::Completed,
    };
    let q0 = [psi0.eval(y1), psi0.eval(y2)];
    traj.times.push(0.0);
    traj.q1.push(q0[0]);
    traj.q2.push(q0[1]);
    traj.inner_iters.push(0);
    traj.residuals.push(0.0);
    let mut g1 = vec![nl.g(q0[0])];
    let mut g2 = vec![nl.g(q0[1])];

    for n in 1..=steps {
        let t = n as f64 * dt;
        // history: lags m = 1..=n, datum at index n - m
        let mut h1 = Complex64::new(0.0, 0.0);
        let mut h2 = Complex64::new(0.0, 0.0);
        for m in 1..=n {
            let ws = selfw.lag_weight(m, n);
            let wc = cross.lag_weight(m, n);
            let (p1, p2) = (g1[n - m], g2[n - m]);
            h1 += ws * p1 * c1 + wc * p2 * c2;
            h2 += wc * p1 * c1 + ws * p2 * c2;
        }
        let w0s = selfw.alpha[0];
        let w0c = cross.alpha[0];
        let sys = StepSystem {
            nl,
            a11: c1 * w0s,
            a12: c2 * w0c,
            a21: c1 * w0c,
            a22: c2 * w0s,
            rhs: [free_evolve_unchecked(psi0, t, y1) - h1, free_evolve_unchecked(psi0, t, y2) - h2],
        };
        let guess = if n >= 2 {
            [2.0 * traj.q1[n - 1] - traj.q1[n - 2], 2.0 * traj.q2[n - 1] - traj.q2[n - 2]]
        } else {
            q0
        };
        let (sol, iters, res) = solve_step(&sys, guess, params.fixed_point_tol, params.max_inner_iter);
        let q = match sol {
            Some(q) => q,
            None => {
                // A runaway iterate past the threshold means the solution itself is leaving
                // every bounded set: report blow-up at the last accepted time.
                let last = [traj.q1[n - 1], traj.q2[n - 1]];
                if nl.sigma >= 1.0 && max_norm(last) > params.blowup_threshold.sqrt() {
                    traj.outcome = Outcome::BlowUp { time: traj.last_time() };
                    return Ok(traj);
                }
                return Err(Error::InnerIteration { step: n, time: t, residual: res, iterations: iters as usize });
            }
        };
        traj.times.push(t);
        traj.q1.push(q[0]);
        traj.q2.push(q[1]);
        traj.inner_iters.push(iters);
        traj.residuals.push(res);
        g1.push(nl.g(q[0]));
        g2.push(nl.g(q[1]));
        if max_norm(q) > params.blowup_threshold {
            traj.outcome = Outcome::BlowUp { time: t };
            return Ok(traj);
        }
        let resolution = step_resolution(dt, (s1, s2), nl.sigma, q);
        if resolution > params.resolution_limit {
            // keep only steps whose state the grid still resolves
            traj.times.pop();
            traj.q1.pop();
            traj.q2.pop();
            traj.inner_iters.pop();
            traj.residuals.pop();
            traj.outcome = Outcome::Unresolved { time: t, resolution };
            return Ok(traj);
        }
    }
    Ok(traj)
}

/// Exact two-frequency charges of the linear problem with beating initial data.
#[derive(Debug, Clone)]
pub struct LinearBeating {
    pub states: BeatingStates,
    pub mix_alpha: f64,
    pub mix_beta: f64,
    f_left: f64,
    f_right: f64,
    e_left: f64,
    e_right: f64,
}

impl LinearBeating {
    pub fn new(cfg: &WellConfig, mix_alpha: f64, mix_beta: f64) -> Result<Self> {
        let states = beating_states(cfg)?;
        let [y1, y2] = cfg.centers();
        Ok(Self {
            f_left: states.fundamental.eval(y1),
            f_right: states.fundamental.eval(y2),
            e_left: states.excited.eval(y1),
            e_right: states.excited.eval(y2),
            states,
            mix_alpha,
            mix_beta,
        })
    }

    pub fn charges(&self, t: f64) -> (Complex64, Complex64) {
        let pf = Complex64::from_polar(1.0, self.states.pair.lambda0 * t);
        let pe = Complex64::from_polar(1.0, self.states.pair.lambda1 * t);
        let (a, b) = (self.mix_alpha, self.mix_beta);
        (a * self.f_left * pf + b * self.e_left * pe, a * self.f_right * pf + b * self.e_right * pe)
    }

    pub fn initial_state(&self) -> InitialState {
        InitialState::beating(&self.states, Complex64::new(self.mix_alpha, 0.0), Complex64::new(self.mix_beta, 0.0))
    }
}

/// `(q1(t), q2(t))` of the linear beating solution.
pub fn linear_exact_charges(cfg: &WellConfig, mix_alpha: f64, mix_beta: f64, t: f64) -> Result<(Complex64, Complex64)> {
    Ok(LinearBeating::new(cfg, mix_alpha, mix_beta)?.charges(t))
}

/// The coupling `gamma` whose initial time-dependent strengths `gamma |psi0(+-a)|^(2 sigma)`
/// average to `nl.gamma`, i.e. `2 gamma0 / (|psi0(a)|^(2 sigma) + |psi0(-a)|^(2 sigma))`.
pub fn effective_gamma(nl: &Nonlinearity, psi0: &InitialState, cfg: &WellConfig) -> Result<f64> {
    let [y1, y2] = cfg.centers();
    let s = nl.sigma;
    let den = psi0.eval(y2).norm_sqr().powf(s) + psi0.eval(y1).norm_sqr().powf(s);
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::Domain("initial state vanishes at both wells".into()));
    }
    Ok(2.0 * nl.gamma / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freeprop::free_evolve_at;
    use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};

    fn figure_cfg() -> WellConfig {
        WellConfig::symmetric(3.0, -0.5).unwrap()
    }

    /// `int_lo^hi exp(i b/u) u^(-1/2) (u - lo)^k du` through `v = 1/sqrt(u)`, with the
    /// infinite part of the `v` range moved onto a ray where `exp(i b v^2)` decays.
    fn moment_oracle(b: f64, lo: f64, hi: f64, k: i32) -> Complex64 {
        let tol = Tolerance { abs: 1e-15, rel: 1e-13, max_intervals: 50_000 };
        // integrand in v: 2 exp(i b v^2) v^-2 (v^-2 - lo)^k
        let f = |v: Complex64| 2.0 * (Complex64::i() * b * v * v).exp() / (v * v) * (1.0 / (v * v) - lo).powi(k);
        let v_hi = 1.0 / hi.sqrt();
        if lo == 0.0 {
            let e = Complex64::from_polar(1.0, FRAC_PI_4);
            integrate_to_infinity(|s| f(v_hi + e * s) * e, 0.0, tol).value
        } else {
            let v_lo = 1.0 / lo.sqrt();
            integrate(|v| f(Complex64::new(v, 0.0)), v_hi, v_lo, &[], tol).value
        }
    }

    #[test]
    fn abel_weights_constant_and_linear_moments() {
        for (n, dt) in [(1, 0.3), (7, 0.05), (400, 0.01)] {
            let w = abel_weights(n, dt).unwrap();
            let t = n as f64 * dt;
            assert!(w.iter().all(|&x| x >= 0.0));
            let sum: f64 = w.iter().sum();
            assert!((sum - 2.0 * t.sqrt()).abs() < 1e-13 * t.sqrt(), "{sum}");
            let lin: f64 = w.iter().enumerate().map(|(k, x)| x * k as f64 * dt).sum();
            assert!((lin - 4.0 / 3.0 * t.powf(1.5)).abs() < 1e-13 * t.powf(1.5), "{lin}");
        }
        let h = 0.2f64;
        let w = abel_weights(1, h).unwrap();
        assert!((w[0] + w[1] - 2.0 * h.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn abel_weights_quadratic_error_order() {
        // int_0^1 s^2 (1 - s)^(-1/2) ds = 16/15
        let err = |n: usize| {
            let w = abel_weights(n, 1.0 / n as f64).unwrap();
            let v: f64 = w.iter().enumerate().map(|(k, x)| x * (k as f64 / n as f64).powi(2)).sum();
            (v - 16.0 / 15.0).abs()
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        let order = ((e1 / e2).log2() + (e2 / e3).log2()) / 2.0;
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn cross_weights_reduce_to_abel_at_zero_separation() {
        let a = abel_weights(25, 0.1).unwrap();
        let c = cross_kernel_moments(25, 0.1, 0.0).unwrap();
        for (x, y) in a.iter().zip(&c) {
            assert_eq!(*x, y.re);
            assert_eq!(y.im, 0.0);
        }
    }

    #[test]
    fn single_interval_moment_against_substitution_oracle() {
        let (a, h) = (3.0, 0.1);
        let w = cross_kernel_moments(1, h, a).unwrap();
        let moment = w[0] + w[1];
        let oracle = moment_oracle(a * a, 0.0, h, 0);
        assert!((moment - oracle).norm() < 1e-12, "{moment} vs {oracle}");
        assert!(moment.norm() <= 2.0 * h.sqrt());
        let (p0, p1) = kernel_antiderivative(a * a, h);
        assert!((p0 - oracle).norm() < 1e-12);
        assert!((p1 - moment_oracle(a * a, 0.0, h, 1)).norm() < 1e-12);
    }

    #[test]
    fn interval_moments_switch_smoothly_between_closed_form_and_kronrod() {
        let b = 9.0;
        let dt = 0.05;
        let kw = KernelWeights::new(b, dt, 3000);
        for j in [0usize, 1, 5, 15, 16, 40, 120, 121, 500, 2999] {
            let lo = j as f64 * dt;
            let hi = lo + dt;
            let i0 = moment_oracle(b, lo, hi, 0);
            let i1 = moment_oracle(b, lo, hi, 1);
            assert!((kw.alpha[j] + kw.beta[j] - i0).norm() < 1e-13, "I0 at j={j}");
            assert!((kw.beta[j] * dt - i1).norm() < 1e-14, "I1 at j={j}");
        }
    }

    #[test]
    fn zero_coupling_gives_free_evolution() {
        let cfg = figure_cfg();
        let lin = LinearBeating::new(&cfg, 0.1, 0.99f64.sqrt()).unwrap();
        let psi0 = lin.initial_state();
        let p = SolverParams::new(0.5, 10.0);
        let traj = solve_charges(&cfg, &Nonlinearity::linear(0.0), &psi0, &p).unwrap();
        for (n, &t) in traj.times.iter().enumerate().skip(1) {
            assert_eq!(traj.q1[n], free_evolve_at(&psi0, t, -3.0).unwrap());
            assert_eq!(traj.q2[n], free_evolve_at(&psi0, t, 3.0).unwrap());
        }
    }

    #[test]
    fn stationary_state_rotates_with_positive_phase() {
        let cfg = figure_cfg();
        let lin = LinearBeating::new(&cfg, 1.0, 0.0).unwrap();
        let psi0 = lin.initial_state();
        let p = SolverParams::new(0.02, 20.0);
        let traj = solve_charges(&cfg, &Nonlinearity::linear(-0.5), &psi0, &p).unwrap();
        let phi = lin.states.fundamental.eval(-3.0);
        let lambda = lin.states.pair.lambda0;
        for n in (0..traj.len()).step_by(100) {
            let exact = phi * Complex64::from_polar(1.0, lambda * traj.times[n]);
            assert!((traj.q1[n] - exact).norm() < 2e-3 * phi, "t={} {} vs {exact}", traj.times[n], traj.q1[n]);
            assert!((traj.q1[n] - traj.q2[n]).norm() < 1e-10);
        }
    }

    #[test]
    fn linear_solver_tracks_exact_beating() {
        let cfg = figure_cfg();
        let lin = LinearBeating::new(&cfg, 0.1, 0.99f64.sqrt()).unwrap();
        let psi0 = lin.initial_state();
        let tb = 2.0 * PI / lin.states.pair.delta_lambda;
        let p = SolverParams::new(tb / 400.0, tb / 2.0);
        let traj = solve_charges(&cfg, &Nonlinearity::linear(-0.5), &psi0, &p).unwrap();
        let scale = traj.q1.iter().map(|q| q.norm()).fold(0.0, f64::max);
        let err = traj
            .times
            .iter()
            .enumerate()
            .map(|(n, &t)| {
                let (e1, e2) = lin.charges(t);
                (traj.q1[n] - e1).norm().max((traj.q2[n] - e2).norm())
            })
            .fold(0.0, f64::max);
        assert!(err / scale < 2e-3, "relative error {}", err / scale);
    }

    #[test]
    fn phase_covariance_and_symmetry() {
        let cfg = figure_cfg();
        let states = beating_states(&cfg).unwrap();
        let psi0 = InitialState::beating(&states, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let nl = Nonlinearity::new(-1.2, 0.5).unwrap();
        let p = SolverParams::new(0.25, 25.0);
        let base = solve_charges(&cfg, &nl, &psi0, &p).unwrap();
        let phase = Complex64::from_polar(1.0, 0.7);
        let rotated = solve_charges(&cfg, &nl, &psi0.scaled(phase), &p).unwrap();
        for n in 0..base.len() {
            assert!((rotated.q1[n] - phase * base.q1[n]).norm() < 1e-9);
            assert!((base.q1[n] - base.q2[n]).norm() < 1e-9);
        }
    }

    #[test]
    fn marching_is_causal() {
        let cfg = figure_cfg();
        let states = beating_states(&cfg).unwrap();
        let psi0 = InitialState::beating(&states, Complex64::new(0.1, 0.0), Complex64::new(0.99f64.sqrt(), 0.0));
        let nl = Nonlinearity::new(-1.0, 0.3).unwrap();
        let long = solve_charges(&cfg, &nl, &psi0, &SolverParams::new(0.2, 20.0)).unwrap();
        let short = solve_charges(&cfg, &nl, &psi0, &SolverParams::new(0.2, 8.0)).unwrap();
        for n in 0..short.len() {
            assert_eq!(short.q1[n], long.q1[n]);
            assert_eq!(short.q2[n], long.q2[n]);
        }
    }

    #[test]
    fn accepted_steps_meet_tolerance() {
        let cfg = figure_cfg();
        let states = beating_states(&cfg).unwrap();
        let psi0 = InitialState::beating(&states, Complex64::new(0.1, 0.0), Complex64::new(0.99f64.sqrt(), 0.0));
        let nl = Nonlinearity::new(-3.5, 0.9).unwrap();
        let p = SolverParams::new(0.05, 30.0);
        let traj = solve_charges(&cfg, &nl, &psi0, &p).unwrap();
        assert_eq!(traj.outcome, Outcome::Completed);
        assert!(traj.residuals.iter().all(|&r| r < p.fixed_point_tol));
        assert_eq!(traj.q1[0], psi0.eval(-3.0));
    }

    #[test]
    fn newton_jacobian_matches_finite_differences() {
        let nl = Nonlinearity::new(-2.0, 0.8).unwrap();
        let sys = StepSystem {
            nl: &nl,
            a11: Complex64::new(0.3, -0.2),
            a12: Complex64::new(-0.05, 0.1),
            a21: Complex64::new(0.07, 0.02),
            a22: Complex64::new(0.25, 0.4),
            rhs: [Complex64::new(0.4, 0.1), Complex64::new(-0.2, 0.3)],
        };
        // one Newton step from near the root must contract quadratically
        let mut q = [Complex64::new(0.35, 0.05), Complex64::new(-0.15, 0.2)];
        for _ in 0..20 {
            q = sys.fixed_point(q);
        }
        let r0 = max_norm(sys.residual(q));
        let q1 = sys.newton(q).unwrap();
        let r1 = max_norm(sys.residual(q1));
        assert!(r1 < 10.0 * r0 * r0 + 1e-15, "{r0} -> {r1}");
        // Wirtinger derivatives against central differences
        let z = Complex64::new(0.7, -0.4);
        let (d, e) = nl.dg(z);
        let h = 1e-6;
        let dx = (nl.g(z + h) - nl.g(z - h)) / (2.0 * h);
        let dy = (nl.g(z + Complex64::i() * h) - nl.g(z - Complex64::i() * h)) / (2.0 * h);
        assert!((dx - (d + e)).norm() < 1e-8);
        assert!((dy - Complex64::i() * (d - e)).norm() < 1e-8);
    }

    #[test]
    fn blowup_threshold_stops_the_march() {
        let cfg = figure_cfg();
        let states = beating_states(&cfg).unwrap();
        let psi0 = InitialState::beating(&states, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let nl = Nonlinearity::new(-0.5, 1.2).unwrap();
        let mut p = SolverParams::new(0.1, 10.0);
        p.blowup_threshold = 0.5 * psi0.eval(-3.0).norm();
        let traj = solve_charges(&cfg, &nl, &psi0, &p).unwrap();
        assert_eq!(traj.outcome, Outcome::BlowUp { time: 0.1 });
        assert_eq!(traj.len(), 2);
        assert!(traj.q1[1].norm() > p.blowup_threshold);
    }

    #[test]
    fn focusing_beyond_the_step_resolution_is_reported() {
        let cfg = figure_cfg();
        let states = beating_states(&cfg).unwrap();
        let psi0 = InitialState::beating(&states, Complex64::new(3.0, 0.0), Complex64::new(0.0, 0.0));
        let nl = Nonlinearity::new(-1.0, 1.2).unwrap();
        let mut stops = Vec::new();
        for dt in [0.02, 0.01] {
            let p = SolverParams::new(dt, 5.0);
            let traj = solve_charges(&cfg, &nl, &psi0, &p).unwrap();
            let Outcome::Unresolved { time, resolution } = traj.outcome else {
                panic!("{:?}", traj.outcome);
            };
            assert!(resolution > p.resolution_limit);
            assert!((time - traj.last_time() - dt).abs() < 1e-12);
            let n = traj.len() - 1;
            let kept = step_resolution(dt, traj.strengths, 1.2, [traj.q1[n], traj.q2[n]]);
            assert!(kept <= p.resolution_limit, "{kept}");
            stops.push(time);
        }
        // the loss of resolution marks the same physical time at both steps
        assert!((stops[0] - stops[1]).abs() <= 0.02 + 1e-12);
    }

    #[test]
    fn effective_gamma_cases() {
        let cfg = figure_cfg();
        let lin = LinearBeating::new(&cfg, 0.1, 0.99f64.sqrt()).unwrap();
        let psi0 = lin.initial_state();
        assert_eq!(effective_gamma(&Nonlinearity::linear(-0.5), &psi0, &cfg).unwrap(), -0.5);
        let stationary = InitialState::beating(&lin.states, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let nl = Nonlinearity::new(-0.5, 0.7).unwrap();
        let q = stationary.eval(3.0).norm();
        let g = effective_gamma(&nl, &stationary, &cfg).unwrap();
        assert!((g - (-0.5) / q.powf(1.4)).abs() < 1e-14);
        let nl = Nonlinearity::new(-0.5, 0.3).unwrap();
        let (l, r) = (psi0.eval(-3.0).norm(), psi0.eval(3.0).norm());
        let g = effective_gamma(&nl, &psi0, &cfg).unwrap();
        assert!((g - (-1.0) / (l.powf(0.6) + r.powf(0.6))).abs() < 1e-14);
        assert!((g - (-0.964_856_455_199_078_3)).abs() < 1e-12);
    }

    #[test]
    fn linear_exact_reference_properties() {
        let cfg = figure_cfg();
        let (q1, _) = linear_exact_charges(&cfg, 1.0, 0.0, 13.0).unwrap();
        let s = beating_states(&cfg).unwrap();
        assert!((q1.norm() - s.fundamental.eval(-3.0)).abs() < 1e-15);
        let h = 0.5f64.sqrt();
        let lin = LinearBeating::new(&cfg, h, h).unwrap();
        let tb = 2.0 * PI / s.pair.delta_lambda;
        let at = |t: f64| lin.charges(t).0.norm_sqr();
        assert!(at(0.0) > at(0.1 * tb) && at(0.0) > at(0.9 * tb));
        assert!(at(0.5 * tb) < at(0.45 * tb) && at(0.5 * tb) < at(0.55 * tb));
        assert!((at(0.0) - at(tb)).abs() < 1e-14);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SolverParams::new(0.0, 1.0).validate().is_err());
        assert!(SolverParams::new(0.1, 0.01).validate().is_err());
        assert!(Nonlinearity::new(-1.0, -0.1).is_err());
        assert!(abel_weights(0, 0.1).is_err());
        assert!(cross_kernel_moments(3, 0.1, -1.0).is_err());
    }
}
