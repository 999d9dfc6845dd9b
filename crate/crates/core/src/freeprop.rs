//! Free Schrödinger evolution `U(t) = exp(i t d^2/dx^2)` with kernel
//! `U(tau, y) = exp(i y^2 / (4 tau)) / sqrt(4 i pi tau)`, principal branch
//! `sqrt(i) = exp(i pi/4)`.
//!
//! Initial data built from exponentials `exp(-kappa |x - c|)` evolve in closed form:
//! each half-line contributes `exp(i X^2/(4t)) w(.)/2` with `w` the Faddeeva function,
//! so the inhomogeneous terms of the charge equations cost a handful of `w`
//! evaluations per time step.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::faddeeva::faddeeva_upper;
use crate::quadrature::{self, Tolerance};
use crate::spectral::BeatingStates;
use crate::{Error, Result};

/// A complex value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexAmplitude {
    pub value: Complex64,
    pub error: f64,
}

/// One atom `weight * exp(-kappa |x - center|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub weight_re: f64,
    pub weight_im: f64,
    pub kappa: f64,
    pub center: f64,
}

impl ExpTerm {
    pub fn new(weight: Complex64, kappa: f64, center: f64) -> Self {
        Self { weight_re: weight.re, weight_im: weight.im, kappa, center }
    }

    pub fn weight(&self) -> Complex64 {
        Complex64::new(self.weight_re, self.weight_im)
    }
}

/// Initial datum `psi0(x) = sum_j w_j exp(-kappa_j |x - c_j|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub terms: Vec<ExpTerm>,
}

impl InitialState {
    pub fn new(terms: Vec<ExpTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Domain("initial state needs at least one term".into()));
        }
        for t in &terms {
            if !(t.kappa > 0.0 && t.kappa.is_finite()) {
                return Err(Error::Domain(format!("term decay rate must be positive, got {}", t.kappa)));
            }
            if !(t.center.is_finite() && t.weight_re.is_finite() && t.weight_im.is_finite()) {
                return Err(Error::Domain("term weight and center must be finite".into()));
            }
        }
        Ok(Self { terms })
    }

    /// `mix_alpha * phi_f + mix_beta * phi_e`.
    pub fn beating(states: &BeatingStates, mix_alpha: Complex64, mix_beta: Complex64) -> Self {
        let mut terms = Vec::with_capacity(4);
        for (mix, s) in [(mix_alpha, states.fundamental), (mix_beta, states.excited)] {
            let k = s.kappa();
            // G(x) = exp(-k|x|) / (2k)
            terms.push(ExpTerm::new(mix * s.coeff_left / (2.0 * k), k, -s.a));
            terms.push(ExpTerm::new(mix * s.coeff_right / (2.0 * k), k, s.a));
        }
        Self { terms }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.terms.iter().map(|t| t.weight() * (-t.kappa * (x - t.center).abs()).exp()).sum()
    }

    pub fn kappa_max(&self) -> f64 {
        self.terms.iter().map(|t| t.kappa).fold(0.0, f64::max)
    }

    /// Closed-form L2 norm.
    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for p in &self.terms {
            for q in &self.terms {
                let overlap = exp_overlap(p.kappa, p.center, q.kappa, q.center);
                acc += (p.weight() * q.weight().conj()).re * overlap;
            }
        }
        acc.max(0.0).sqrt()
    }

    /// The same state multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| ExpTerm::new(t.weight() * factor, t.kappa, t.center))
            .collect();
        Self { terms }
    }
}

/// `int exp(-k1 |x - c1| - k2 |x - c2|) dx`.
fn exp_overlap(k1: f64, c1: f64, k2: f64, c2: f64) -> f64 {
    let (k1, k2, d) = if c1 <= c2 { (k1, k2, c2 - c1) } else { (k2, k1, c1 - c2) };
    let outer = ((-k2 * d).exp() + (-k1 * d).exp()) / (k1 + k2);
    // (exp(-k1 d) - exp(-k2 d)) / (k2 - k1), written to survive k1 == k2
    let x = (k2 - k1) * d;
    let phi = if x.abs() < 1e-12 { 1.0 - 0.5 * x } else { -(-x).exp_m1() / x };
    outer + (-k1 * d).exp() * d * phi
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be positive, got {t}")))
    }
}

pub fn propagator_kernel(tau: f64, y: f64) -> Result<Complex64> {
    check_time(tau)?;
    Ok(Complex64::from_polar(1.0 / (4.0 * PI * tau).sqrt(), y * y / (4.0 * tau) - FRAC_PI_4))
}

/// `int_0^inf U(t; X - z) exp(-kappa z) dz`.
fn half_line(kappa: f64, x: f64, t: f64) -> Complex64 {
    let sqrt_t = t.sqrt();
    let e_minus = Complex64::from_polar(1.0, -FRAC_PI_4);
    let e_plus = Complex64::from_polar(1.0, FRAC_PI_4);
    let zeta = e_minus * (-x / (2.0 * sqrt_t)) + e_plus * (kappa * sqrt_t);
    let chirp = Complex64::from_polar(0.5, x * x / (4.0 * t));
    let i = Complex64::i();
    if zeta.re >= 0.0 {
        chirp * faddeeva_upper(i * zeta)
    } else {
        // erfc(zeta) = 2 - erfc(-zeta)
        Complex64::from_polar((-kappa * x).exp(), kappa * kappa * t) - chirp * faddeeva_upper(-i * zeta)
    }
}

pub(crate) fn free_exp(kappa: f64, center: f64, t: f64, x: f64) -> Complex64 {
    let d = x - center;
    half_line(kappa, d, t) + half_line(kappa, -d, t)
}

/// `(U(t) weight exp(-kappa |. - center|))(x)`.
pub fn free_evolve_exponential(kappa: f64, center: f64, weight: Complex64, t: f64, x: f64) -> Result<Complex64> {
    check_time(t)?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
    }
    Ok(weight * free_exp(kappa, center, t, x))
}

/// `(U(t) psi0)(x)`; at `t = 0` returns `psi0(x)`.
pub fn free_evolve_at(psi0: &InitialState, t: f64, x: f64) -> Result<Complex64> {
    if t == 0.0 {
        return Ok(psi0.eval(x));
    }
    check_time(t)?;
    Ok(free_evolve_unchecked(psi0, t, x))
}

pub(crate) fn free_evolve_unchecked(psi0: &InitialState, t: f64, x: f64) -> Complex64 {
    if t == 0.0 {
        return psi0.eval(x);
    }
    psi0.terms.iter().map(|term| term.weight() * free_exp(term.kappa, term.center, t, x)).sum()
}

/// Quadrature fallback for initial data given as a callable profile supported on
/// `[lo, hi]`; `breaks` lists points where the profile is not smooth.
pub fn free_evolve_profile<F>(profile: F, lo: f64, hi: f64, breaks: &[f64], t: f64, x: f64) -> Result<ComplexAmplitude>
where
    F: Fn(f64) -> Complex64,
{
    check_time(t)?;
    if !(lo < hi) {
        return Err(Error::Domain(format!("empty support [{lo}, {hi}]")));
    }
    let prefactor = Complex64::from_polar(1.0 / (4.0 * PI * t).sqrt(), -FRAC_PI_4);
    let integrand = |y: f64| {
        let d = x - y;
        Complex64::from_polar(1.0, d * d / (4.0 * t)) * profile(y)
    };
    let tol = Tolerance { abs: 1e-12, rel: 1e-11, max_intervals: 200_000 };
    let r = quadrature::integrate(integrand, lo, hi, breaks, tol);
    Ok(ComplexAmplitude { value: prefactor * r.value, error: prefactor.norm() * r.error })
}
