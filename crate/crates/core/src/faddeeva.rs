//! The Faddeeva function `w(z) = exp(-z^2) erfc(-iz)`.
//!
//! The evaluation follows the Poppe–Wijers scheme: a Taylor series for `exp(z^2) w(z)`
//! near the origin, Laplace's continued fraction far from it, and in between the
//! continued fraction combined with Gautschi's truncated Taylor expansion about
//! `z + ih`. Everything is computed for the first quadrant; the other quadrants follow
//! from `w(-conj(z)) = conj(w(z))` and `w(-z) = 2 exp(-z^2) - w(z)`.

use num_complex::Complex64;

use crate::{Error, Result};

const TWO_OVER_SQRT_PI: f64 = 1.128_379_167_095_512_573_9;
const MAX_EXP: f64 = 708.503_061_461_606;
const MAX_TRIG: f64 = 3.537_118_876_014_22e15;

/// `w(z)` on the whole complex plane.
///
/// Fails when the reflection term `2 exp(-z^2)` of the lower half-plane is not
/// representable.
pub fn faddeeva(z: Complex64) -> Result<Complex64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain(format!("faddeeva: non-finite argument {z}")));
    }
    let (x, y) = (z.re.abs(), z.im.abs());
    let first = w_first_quadrant(x, y);
    if z.im >= 0.0 {
        return Ok(if z.re < 0.0 { first.conj() } else { first });
    }
    // w(z) = 2 exp(-z^2) - w(-z), with -z in the upper half-plane
    let exponent = -z * z;
    if exponent.re > MAX_EXP || exponent.im.abs() > MAX_TRIG {
        return Err(Error::Overflow { z });
    }
    let w_neg = if z.re > 0.0 { first.conj() } else { first };
    Ok(2.0 * exponent.exp() - w_neg)
}

/// `w(z)` for `Im z >= 0`, where it is bounded by one and never overflows.
pub fn faddeeva_upper(z: Complex64) -> Complex64 {
    debug_assert!(z.im >= 0.0, "faddeeva_upper called with Im z < 0: {z}");
    let w = w_first_quadrant(z.re.abs(), z.im.max(0.0));
    if z.re < 0.0 {
        w.conj()
    } else {
        w
    }
}

/// `erfc(z)` for `Re z >= 0`, written as `exp(-z^2) w(iz)`.
pub fn erfc_right(z: Complex64) -> Complex64 {
    debug_assert!(z.re >= 0.0);
    (-z * z).exp() * faddeeva_upper(Complex64::new(-z.im, z.re))
}

fn w_first_quadrant(xabs: f64, yabs: f64) -> Complex64 {
    let xs = xabs / 6.3;
    let ys = yabs / 4.4;
    let mut qrho = xs * xs + ys * ys;
    let xquad = xabs * xabs - yabs * yabs;
    let yquad = 2.0 * xabs * yabs;

    if qrho < 0.085_264 {
        // power series of exp(z^2) w(z), then multiply by exp(-z^2)
        qrho = (1.0 - 0.85 * ys) * qrho.sqrt();
        let n = (6.0 + 72.0 * qrho).round() as usize;
        let mut j = 2 * n + 1;
        let mut xsum = 1.0 / j as f64;
        let mut ysum = 0.0;
        for i in (1..=n).rev() {
            j -= 2;
            let fi = i as f64;
            let xaux = (xsum * xquad - ysum * yquad) / fi;
            ysum = (xsum * yquad + ysum * xquad) / fi;
            xsum = xaux + 1.0 / j as f64;
        }
        let u1 = -TWO_OVER_SQRT_PI * (xsum * yabs + ysum * xabs) + 1.0;
        let v1 = TWO_OVER_SQRT_PI * (xsum * xabs - ysum * yabs);
        let daux = (-xquad).exp();
        let u2 = daux * yquad.cos();
        let v2 = -daux * yquad.sin();
        return Complex64::new(u1 * u2 - v1 * v2, u1 * v2 + v1 * u2);
    }

    let (h, kapn, nu) = if qrho > 1.0 {
        let rho = qrho.sqrt();
        (0.0, 0usize, (3.0 + 1442.0 / (26.0 * rho + 77.0)) as usize)
    } else {
        let rho = (1.0 - ys) * (1.0 - qrho).sqrt();
        (
            1.88 * rho,
            (7.0 + 34.0 * rho).round() as usize,
            (16.0 + 26.0 * rho).round() as usize,
        )
    };
    let shifted = h > 0.0;
    let h2 = 2.0 * h;
    let mut qlambda = if shifted { h2.powi(kapn as i32) } else { 0.0 };
    let (mut rx, mut ry, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0);
    for n in (0..=nu).rev() {
        let np1 = (n + 1) as f64;
        let tx = yabs + h + np1 * rx;
        let ty = xabs - np1 * ry;
        let c = 0.5 / (tx * tx + ty * ty);
        rx = c * tx;
        ry = c * ty;
        if shifted && n <= kapn {
            let tx = qlambda + sx;
            sx = rx * tx - ry * sy;
            sy = ry * tx + rx * sy;
            qlambda /= h2;
        }
    }
    let (mut u, v) = if shifted {
        (TWO_OVER_SQRT_PI * sx, TWO_OVER_SQRT_PI * sy)
    } else {
        (TWO_OVER_SQRT_PI * rx, TWO_OVER_SQRT_PI * ry)
    };
    if yabs == 0.0 {
        u = (-xabs * xabs).exp();
    }
    Complex64::new(u, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn origin_is_one() {
        let w = faddeeva(c(0.0, 0.0)).unwrap();
        assert_eq!(w, c(1.0, 0.0));
    }

    #[test]
    fn imaginary_axis_is_scaled_erfc() {
        // w(iy) = exp(y^2) erfc(y); reference values of erfcx
        let cases = [
            (0.5, 0.615_690_344_192_925_9),
            (1.0, 0.427_583_576_155_807),
            (3.0, 0.179_001_151_181_389_98),
            (10.0, 0.056_140_992_743_822_59),
        ];
        for (y, erfcx) in cases {
            let w = faddeeva(c(0.0, y)).unwrap();
            assert!(w.im.abs() < 1e-15);
            assert!((w.re - erfcx).abs() < 1e-13 * erfcx, "y={y}: {w}");
        }
    }

    #[test]
    fn real_axis_real_part_is_gaussian() {
        for x in [0.3, 1.7, 4.0] {
            let w = faddeeva(c(x, 0.0)).unwrap();
            assert!((w.re - (-x * x).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetry_relations() {
        let z = c(1.3, 0.7);
        let w = faddeeva(z).unwrap();
        let wm = faddeeva(c(-1.3, 0.7)).unwrap();
        assert!((wm - w.conj()).norm() < 1e-15);
        // w(z) + w(-z) = 2 exp(-z^2)
        let wneg = faddeeva(-z).unwrap();
        assert!((w + wneg - 2.0 * (-z * z).exp()).norm() < 1e-13);
    }

    #[test]
    fn lower_half_plane_overflow_is_reported() {
        assert!(matches!(faddeeva(c(0.0, -40.0)), Err(Error::Overflow { .. })));
    }

    #[test]
    fn erfc_right_matches_real_erfc() {
        // erfc(0.5) and erfc(2)
        assert!((erfc_right(c(0.5, 0.0)).re - 0.479_500_122_186_953_5).abs() < 1e-15);
        assert!((erfc_right(c(2.0, 0.0)).re - 0.004_677_734_981_047_266).abs() < 1e-17);
    }
}
