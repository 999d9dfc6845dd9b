//! Bound states of `H = -d^2/dx^2 + gamma1 delta(x + a) + gamma2 delta(x - a)`.
//!
//! `-lambda` is an eigenvalue exactly when the 2x2 matrix
//! `Gamma(lambda)_ij = delta_ij / gamma_i + G(y_i - y_j)` is singular, where
//! `G(x) = exp(-k|x|) / (2k)` with `k = sqrt(lambda)`. Every eigenfunction is a
//! combination `c_left G(x + a) + c_right G(x - a)` whose coefficients span the
//! kernel of that matrix.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellConfig {
    /// Half-separation: the scatterers sit at `-a` and `+a`.
    pub a: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl WellConfig {
    pub fn new(a: f64, gamma1: f64, gamma2: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Domain(format!("half-separation must be positive, got {a}")));
        }
        for (name, g) in [("gamma1", gamma1), ("gamma2", gamma2)] {
            if !g.is_finite() || g == 0.0 {
                return Err(Error::Domain(format!("{name} must be finite and nonzero, got {g}")));
            }
        }
        Ok(Self { a, gamma1, gamma2 })
    }

    pub fn symmetric(a: f64, gamma: f64) -> Result<Self> {
        Self::new(a, gamma, gamma)
    }

    /// Strength ratio `gamma2 / gamma1`.
    pub fn ratio_alpha(&self) -> f64 {
        self.gamma2 / self.gamma1
    }

    pub fn centers(&self) -> [f64; 2] {
        [-self.a, self.a]
    }

    /// Scale used for eigenvalue residuals: `max(1, 1/|gamma1 gamma2|)`.
    pub fn residual_scale(&self) -> f64 {
        (1.0 / (self.gamma1 * self.gamma2).abs()).max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Existence {
    TwoEigenvalues,
    OneEigenvalue,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Fundamental,
    Excited,
}

/// A normalized eigenfunction `coeff_left G(x + a) + coeff_right G(x - a)` with
/// energy `-lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundState {
    pub lambda: f64,
    pub coeff_left: f64,
    pub coeff_right: f64,
    pub label: Level,
    pub a: f64,
}

impl BoundState {
    pub fn kappa(&self) -> f64 {
        self.lambda.sqrt()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.kappa();
        self.coeff_left * green(k, x + self.a) + self.coeff_right * green(k, x - self.a)
    }

    pub fn norm(&self) -> f64 {
        state_norm((self.coeff_left, self.coeff_right), self.kappa(), self.a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    /// Ground state, the larger of the two.
    pub lambda0: f64,
    pub lambda1: f64,
    pub delta_lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Spectrum {
    Pair(EigenPair),
    Single(BoundState),
    Empty,
}

/// The two bound states of a configuration in the two-eigenvalue regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatingStates {
    pub pair: EigenPair,
    pub fundamental: BoundState,
    pub excited: BoundState,
}

/// JSON view of a solved spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub a: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub existence: Existence,
    pub lambda0: Option<f64>,
    pub lambda1: Option<f64>,
    pub delta_lambda: Option<f64>,
    pub beating_period: Option<f64>,
    /// `[[c_left, c_right]]` per bound state, ground state first.
    pub coeffs: Vec<[f64; 2]>,
    /// `|det Gamma|` at each eigenvalue.
    pub residuals: Vec<f64>,
    /// `|c1/c0|` and `|c2/c3|`.
    pub coefficient_ratios: Vec<f64>,
}

pub(crate) fn green(kappa: f64, x: f64) -> f64 {
    (-kappa * x.abs()).exp() / (2.0 * kappa)
}

/// Free Green function `exp(-kappa |x|) / (2 kappa)` of `-d^2/dx^2 + kappa^2`.
pub fn green_function(kappa: f64, x: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Domain(format!("green_function needs kappa > 0, got {kappa}")));
    }
    Ok(green(kappa, x))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("lambda must be positive, got {lambda}")))
    }
}

pub fn gamma_matrix(cfg: &WellConfig, lambda: f64) -> Result<[[f64; 2]; 2]> {
    check_lambda(lambda)?;
    let k = lambda.sqrt();
    let off = green(k, 2.0 * cfg.a);
    let g0 = 0.5 / k;
    Ok([[1.0 / cfg.gamma1 + g0, off], [off, 1.0 / cfg.gamma2 + g0]])
}

/// `4 k^2 gamma1 gamma2 det Gamma(k^2)`, evaluated without cancellation at both ends.
fn scaled_det(cfg: &WellConfig, k: f64) -> f64 {
    let (g1, g2, a) = (cfg.gamma1, cfg.gamma2, cfg.a);
    if 4.0 * k * a < 1.0 {
        4.0 * k * k + 2.0 * k * (g1 + g2) - g1 * g2 * (-4.0 * k * a).exp_m1()
    } else {
        (2.0 * k + g1) * (2.0 * k + g2) - g1 * g2 * (-4.0 * k * a).exp()
    }
}

fn scaled_det_derivative(cfg: &WellConfig, k: f64) -> f64 {
    let (g1, g2, a) = (cfg.gamma1, cfg.gamma2, cfg.a);
    8.0 * k + 2.0 * (g1 + g2) + 4.0 * a * g1 * g2 * (-4.0 * k * a).exp()
}

fn det_at_kappa(cfg: &WellConfig, k: f64) -> f64 {
    scaled_det(cfg, k) / (4.0 * k * k * cfg.gamma1 * cfg.gamma2)
}

/// `det Gamma(lambda)`; its zeros are the eigenvalues `-lambda`.
pub fn det_gamma(cfg: &WellConfig, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(det_at_kappa(cfg, lambda.sqrt()))
}

pub fn existence_condition(cfg: &WellConfig) -> Existence {
    let (g1, g2, a) = (cfg.gamma1, cfg.gamma2, cfg.a);
    match (g1 < 0.0, g2 < 0.0) {
        (true, true) => {
            if 1.0 / g1.abs() + 1.0 / g2.abs() < 2.0 * a {
                Existence::TwoEigenvalues
            } else {
                Existence::OneEigenvalue
            }
        }
        (false, false) => Existence::None,
        // one attractive, one repulsive: the scaled determinant is convex in k and
        // vanishes at k = 0, so a positive root exists iff its slope there is negative
        _ => {
            if g1 + g2 + 2.0 * a * g1 * g2 < 0.0 {
                Existence::OneEigenvalue
            } else {
                Existence::None
            }
        }
    }
}

const SCAN_POINTS: usize = 128;
const BISECTION_RTOL: f64 = 1e-13;
const NEWTON_POLISH_STEPS: usize = 3;
/// Roots closer than this (relative) cannot be told apart from bisection noise.
const DEGENERACY_RTOL: f64 = 100.0 * BISECTION_RTOL;

fn scan_grid(cfg: &WellConfig) -> Vec<f64> {
    let k_max = cfg.gamma1.abs().max(cfg.gamma2.abs());
    let k_min = k_max * 1e-9;
    let ratio = (k_max / k_min).ln() / (SCAN_POINTS - 1) as f64;
    let mut ks: Vec<f64> = (0..SCAN_POINTS).map(|i| k_min * (ratio * i as f64).exp()).collect();
    // the scaled determinant is strictly negative at k = |gamma_i|/2 when both
    // strengths are attractive, which separates even exponentially close roots
    for g in [cfg.gamma1, cfg.gamma2] {
        if g < 0.0 {
            ks.push(0.5 * g.abs());
        }
    }
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    ks
}

fn refine_root(cfg: &WellConfig, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut f_lo = scaled_det(cfg, lo);
    for _ in 0..400 {
        if hi - lo <= BISECTION_RTOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = scaled_det(cfg, mid);
        if f_mid == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo > BISECTION_RTOL * hi {
        return Err(Error::RootNotConverged { lo, hi });
    }
    let mut k = 0.5 * (lo + hi);
    for _ in 0..NEWTON_POLISH_STEPS {
        let d = scaled_det_derivative(cfg, k);
        if d == 0.0 {
            break;
        }
        let next = k - scaled_det(cfg, k) / d;
        // stay inside the bracket: a neighbouring root may be exponentially close
        if next < lo || next > hi || !next.is_finite() {
            break;
        }
        k = next;
    }
    Ok(k)
}

/// Positive roots `k` of the scaled determinant, in increasing order.
fn kappa_roots(cfg: &WellConfig) -> Result<Vec<f64>> {
    let ks = scan_grid(cfg);
    let values: Vec<f64> = ks.iter().map(|&k| scaled_det(cfg, k)).collect();
    let mut roots = Vec::new();
    for i in 0..ks.len() - 1 {
        if values[i] == 0.0 {
            roots.push(ks[i]);
        } else if (values[i] > 0.0) != (values[i + 1] > 0.0) && values[i + 1] != 0.0 {
            roots.push(refine_root(cfg, ks[i], ks[i + 1])?);
        }
    }
    Ok(roots)
}

/// Eigenvalues of the two-delta Hamiltonian (as `lambda`, energy `-lambda`).
pub fn solve_eigenvalues(cfg: &WellConfig) -> Result<Spectrum> {
    let existence = existence_condition(cfg);
    if existence == Existence::None {
        return Ok(Spectrum::Empty);
    }
    let roots = kappa_roots(cfg)?;
    match existence {
        Existence::TwoEigenvalues => {
            if roots.len() < 2 {
                let k_mid = 0.5 * (cfg.gamma1.abs() + cfg.gamma2.abs()) / 2.0;
                return Err(Error::DegeneratePair {
                    midpoint: k_mid * k_mid,
                    delta_bound: 4.0 * k_mid * k_mid * f64::EPSILON,
                });
            }
            let k1 = roots[0];
            let k0 = roots[roots.len() - 1];
            if k0 - k1 < DEGENERACY_RTOL * k0 {
                let mid = 0.5 * (k0 + k1);
                return Err(Error::DegeneratePair {
                    midpoint: mid * mid,
                    delta_bound: 2.0 * DEGENERACY_RTOL * mid * mid,
                });
            }
            Ok(Spectrum::Pair(EigenPair {
                lambda0: k0 * k0,
                lambda1: k1 * k1,
                delta_lambda: (k0 - k1) * (k0 + k1),
            }))
        }
        Existence::OneEigenvalue => match roots.last() {
            Some(&k) => Ok(Spectrum::Single(bound_state(cfg, k * k, Level::Fundamental)?)),
            None => Err(Error::RootNotConverged { lo: 0.0, hi: cfg.gamma1.abs().max(cfg.gamma2.abs()) }),
        },
        Existence::None => Ok(Spectrum::Empty),
    }
}

/// Ground and excited states of a configuration in the two-eigenvalue regime.
pub fn beating_states(cfg: &WellConfig) -> Result<BeatingStates> {
    match solve_eigenvalues(cfg)? {
        Spectrum::Pair(pair) => Ok(BeatingStates {
            pair,
            fundamental: bound_state(cfg, pair.lambda0, Level::Fundamental)?,
            excited: bound_state(cfg, pair.lambda1, Level::Excited)?,
        }),
        Spectrum::Single(_) => Err(Error::NoBeatingPair { found: 1 }),
        Spectrum::Empty => Err(Error::NoBeatingPair { found: 0 }),
    }
}

/// Squared-norm denominator of the ground-state normalization,
/// `c0 = 2 |gamma1| lambda0^(3/4) / sqrt(D0)`.
fn ground_denominator(cfg: &WellConfig, k: f64) -> f64 {
    let (g1, g2, a) = (cfg.gamma1, cfg.gamma2, cfg.a);
    g1 * g2 * (g1 + 2.0 * k) / (g2 + 2.0 * k) - g1 * (g1 + 4.0 * k + 4.0 * k * a * (g1 + 2.0 * k))
}

/// Same for the excited state, `c3 = 2 |gamma2| lambda1^(3/4) / sqrt(D3)`.
fn excited_denominator(cfg: &WellConfig, k: f64) -> f64 {
    let (g1, g2, a) = (cfg.gamma1, cfg.gamma2, cfg.a);
    g1 * g2 * (g2 + 2.0 * k) / (g1 + 2.0 * k) - g2 * (g2 + 4.0 * k + 4.0 * k * a * (g2 + 2.0 * k))
}

/// Closed-form left coefficient `c0` of the ground state.
pub fn ground_coefficient_closed_form(cfg: &WellConfig, lambda0: f64) -> f64 {
    let k = lambda0.sqrt();
    2.0 * cfg.gamma1.abs() * k.powf(1.5) / ground_denominator(cfg, k).sqrt()
}

/// Closed-form magnitude `c3` of the excited state's right coefficient.
pub fn excited_coefficient_closed_form(cfg: &WellConfig, lambda1: f64) -> f64 {
    let k = lambda1.sqrt();
    2.0 * cfg.gamma2.abs() * k.powf(1.5) / excited_denominator(cfg, k).sqrt()
}

/// `|c1/c0| = sqrt((2k0/gamma1 + 1) / (2k0/gamma2 + 1))`.
pub fn ground_ratio_closed_form(cfg: &WellConfig, lambda0: f64) -> f64 {
    let k = lambda0.sqrt();
    ((2.0 * k / cfg.gamma1 + 1.0) / (2.0 * k / cfg.gamma2 + 1.0)).abs().sqrt()
}

/// `|c2/c3| = sqrt((2k1/gamma2 + 1) / (2k1/gamma1 + 1))`.
pub fn excited_ratio_closed_form(cfg: &WellConfig, lambda1: f64) -> f64 {
    let k = lambda1.sqrt();
    ((2.0 * k / cfg.gamma2 + 1.0) / (2.0 * k / cfg.gamma1 + 1.0)).abs().sqrt()
}

/// Kernel direction `(left, right)` of `Gamma(k^2)`.
fn kernel_direction(cfg: &WellConfig, k: f64) -> (f64, f64) {
    let d1 = 1.0 / cfg.gamma1 + 0.5 / k;
    let d2 = 1.0 / cfg.gamma2 + 0.5 / k;
    let off = green(k, 2.0 * cfg.a);
    if d1 * d2 > 0.0 {
        // At a root d1 d2 = off^2, so right/left = -d1/off = -sign(d1) sqrt(d1/d2).
        // Both diagonals suffer cancellation of order exp(-2ka); their ratio is exact
        // for equal strengths, which keeps symmetric states exactly (anti)symmetric.
        let r = (d1 / d2).sqrt();
        return (1.0, -d1.signum() * r);
    }
    if d1.abs() >= d2.abs() {
        (off, -d1)
    } else {
        (-d2, off)
    }
}

/// Normalized eigenfunction for the eigenvalue `lambda`.
///
/// The fundamental state has both coefficients positive; the excited state has a
/// positive left and a negative right coefficient, so an equal-weight superposition
/// starts out concentrated around `-a`.
pub fn bound_state(cfg: &WellConfig, lambda: f64, label: Level) -> Result<BoundState> {
    let residual = det_gamma(cfg, lambda)?.abs();
    if residual > 1e-8 * cfg.residual_scale() {
        return Err(Error::NotAnEigenvalue { lambda, residual });
    }
    let k = lambda.sqrt();
    let (mut left, mut right) = kernel_direction(cfg, k);
    match label {
        Level::Fundamental => {
            if left < 0.0 || (left == 0.0 && right < 0.0) {
                left = -left;
                right = -right;
            }
        }
        Level::Excited => {
            if right > 0.0 || (right == 0.0 && left < 0.0) {
                left = -left;
                right = -right;
            }
        }
    }
    // The closed-form coefficients lose relative accuracy for a state localized in the
    // other well; the overlap norm does not.
    let scale = 1.0 / state_norm((left, right), k, cfg.a);
    left *= scale;
    right *= scale;
    Ok(BoundState { lambda, coeff_left: left, coeff_right: right, label, a: cfg.a })
}

/// L2 norm of `c G(x + a) + d G(x - a)`, from
/// `int G^2 = 1/(4k^3)` and `int G(x + a) G(x - a) = (1 + 2ka) exp(-2ka) / (4k^3)`.
pub fn state_norm(coeffs: (f64, f64), kappa: f64, a: f64) -> f64 {
    let (c, d) = coeffs;
    let overlap = (1.0 + 2.0 * kappa * a) * (-2.0 * kappa * a).exp();
    ((c * c + d * d + 2.0 * c * d * overlap) / (4.0 * kappa.powi(3))).sqrt()
}

pub fn eval_state(state: &BoundState, x: f64) -> f64 {
    state.eval(x)
}

/// Runs the full spectral analysis for reporting.
pub fn spectral_report(cfg: &WellConfig) -> Result<SpectralReport> {
    let existence = existence_condition(cfg);
    let mut report = SpectralReport {
        a: cfg.a,
        gamma1: cfg.gamma1,
        gamma2: cfg.gamma2,
        existence,
        lambda0: None,
        lambda1: None,
        delta_lambda: None,
        beating_period: None,
        coeffs: Vec::new(),
        residuals: Vec::new(),
        coefficient_ratios: Vec::new(),
    };
    match solve_eigenvalues(cfg)? {
        Spectrum::Pair(pair) => {
            let states = beating_states(cfg)?;
            report.lambda0 = Some(pair.lambda0);
            report.lambda1 = Some(pair.lambda1);
            report.delta_lambda = Some(pair.delta_lambda);
            report.beating_period = Some(2.0 * std::f64::consts::PI / pair.delta_lambda);
            for s in [states.fundamental, states.excited] {
                report.coeffs.push([s.coeff_left, s.coeff_right]);
                report.residuals.push(det_gamma(cfg, s.lambda)?.abs());
            }
            let f = states.fundamental;
            let e = states.excited;
            report.coefficient_ratios.push((f.coeff_right / f.coeff_left).abs());
            report.coefficient_ratios.push((e.coeff_left / e.coeff_right).abs());
        }
        Spectrum::Single(state) => {
            report.lambda0 = Some(state.lambda);
            report.coeffs.push([state.coeff_left, state.coeff_right]);
            report.residuals.push(det_gamma(cfg, state.lambda)?.abs());
        }
        Spectrum::Empty => {}
    }
    Ok(report)
}
