//! Globally adaptive Gauss–Kronrod (7/15) quadrature for complex integrands.
//!
//! Used for the free-evolution fallback of arbitrary profiles and as the
//! cross-check for the closed-form kernel moments.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use num_complex::Complex64;

use crate::freeprop::ComplexAmplitude;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639,
    0.949_107_912_342_758_525,
    0.864_864_423_359_769_073,
    0.741_531_185_599_394_440,
    0.586_087_235_467_691_130,
    0.405_845_151_377_397_167,
    0.207_784_955_007_898_468,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_553,
    0.104_790_010_322_250_184,
    0.140_653_259_715_525_919,
    0.169_004_726_639_267_903,
    0.190_350_578_064_785_410,
    0.204_432_940_075_298_892,
    0.209_482_141_084_727_828,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693,
    0.279_705_391_489_276_668,
    0.381_830_050_505_118_945,
    0.417_959_183_673_469_388,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-13, rel: 1e-12, max_intervals: 20_000 }
    }
}

struct Segment {
    lo: f64,
    hi: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> Complex64>(f: &F, lo: f64, hi: f64) -> (Complex64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += sum * WGK[j];
        if j % 2 == 1 {
            gauss += sum * WG[j / 2];
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).norm();
    (value, error)
}

/// Integrates `f` over `[lo, hi]`, bisecting the worst segment until the summed
/// error estimate meets the tolerance. `breaks` are interior points where `f`
/// is known to be non-smooth.
pub fn integrate<F>(f: F, lo: f64, hi: f64, breaks: &[f64], tol: Tolerance) -> ComplexAmplitude
where
    F: Fn(f64) -> Complex64,
{
    let mut points: Vec<f64> = std::iter::once(lo)
        .chain(breaks.iter().copied().filter(|&p| p > lo && p < hi))
        .chain(std::iter::once(hi))
        .collect();
    points.sort_by(f64::total_cmp);

    let mut heap = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut total_err = 0.0;
    for pair in points.windows(2) {
        let (value, error) = gk15(&f, pair[0], pair[1]);
        total += value;
        total_err += error;
        heap.push(Segment { lo: pair[0], hi: pair[1], value, error });
    }

    while total_err > tol.abs.max(tol.rel * total.norm()) && heap.len() < tol.max_intervals {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&f, worst.lo, mid);
        let (v2, e2) = gk15(&f, mid, worst.hi);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { lo: worst.lo, hi: mid, value: v1, error: e1 });
        heap.push(Segment { lo: mid, hi: worst.hi, value: v2, error: e2 });
    }
    // re-sum to shed the drift of the running totals
    let (value, error) = heap
        .iter()
        .fold((Complex64::new(0.0, 0.0), 0.0), |(v, e), s| (v + s.value, e + s.error));
    ComplexAmplitude { value, error }
}

/// Integrates `f` over `[lo, inf)` through the map `s = lo + r / (1 - r)`.
pub fn integrate_to_infinity<F>(f: F, lo: f64, tol: Tolerance) -> ComplexAmplitude
where
    F: Fn(f64) -> Complex64,
{
    let mapped = |r: f64| {
        if r >= 1.0 {
            return Complex64::new(0.0, 0.0);
        }
        let one_minus = 1.0 - r;
        let value = f(lo + r / one_minus) / (one_minus * one_minus);
        if value.re.is_finite() && value.im.is_finite() {
            value
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    integrate(mapped, 0.0, 1.0, &[], tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| Complex64::new(x * x * x, -x), 0.0, 2.0, &[], Tolerance::default());
        assert!((r.value - Complex64::new(4.0, -2.0)).norm() < 1e-14);
    }

    #[test]
    fn oscillatory_exponential() {
        // int_0^10 exp(i 7 x) dx
        let r = integrate(|x| Complex64::new(0.0, 7.0 * x).exp(), 0.0, 10.0, &[], Tolerance::default());
        let exact = (Complex64::new(0.0, 70.0).exp() - 1.0) / Complex64::new(0.0, 7.0);
        assert!((r.value - exact).norm() < 1e-12);
    }

    #[test]
    fn kink_at_break_point() {
        let r = integrate(|x: f64| Complex64::new(x.abs(), 0.0), -1.0, 2.0, &[0.0], Tolerance::default());
        assert!((r.value.re - 2.5).abs() < 1e-14);
    }

    #[test]
    fn semi_infinite_exponential() {
        let r = integrate_to_infinity(|x| Complex64::new(-2.0 * x, 3.0 * x).exp(), 0.0, Tolerance::default());
        let exact = 1.0 / Complex64::new(2.0, -3.0);
        assert!((r.value - exact).norm() < 1e-12, "{} vs {}", r.value, exact);
    }
}
