//! Complex error function and Faddeeva function.
//!
//! Evaluation happens in `f64` whatever the caller's scalar is. Accuracy is
//! about 1e-14 relative over the plane, except where the result itself is
//! the small difference of two O(1) quantities (absolute there).

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

type C64 = Complex<f64>;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
/// `exp(700)` is close to the largest finite `f64` exponential.
const EXP_LIMIT: f64 = 700.0;
const CF_MAX_TERMS: usize = 20_000;

/// `erf(z)` for complex `z`.
pub fn erf<T: Real>(z: Complex<T>) -> Result<Complex<T>> {
    erf64(widen(z)).map(narrow)
}

/// Faddeeva function `w(z) = exp(-z²) erfc(-iz)`.
pub fn faddeeva<T: Real>(z: Complex<T>) -> Result<Complex<T>> {
    faddeeva64(widen(z)).map(narrow)
}

fn widen<T: Real>(z: Complex<T>) -> C64 {
    C64::new(z.re.to_f64_lossy(), z.im.to_f64_lossy())
}

fn narrow<T: Real>(z: C64) -> Complex<T> {
    Complex::new(T::lit(z.re), T::lit(z.im))
}

pub(crate) fn erf64(z: C64) -> Result<C64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(overflow(z));
    }
    if z.re < 0.0 {
        return erf64(-z).map(|v| -v);
    }
    let r = z.norm();
    if r < 2.0 || (z.re < 1.0 && r < 7.0) {
        return Ok(erf_taylor(z));
    }
    let damp = exp_neg_square(z)?;
    let w = faddeeva64(C64::new(-z.im, z.re))?;
    Ok(C64::new(1.0, 0.0) - damp * w)
}

pub(crate) fn faddeeva64(z: C64) -> Result<C64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(overflow(z));
    }
    if z.im < 0.0 {
        let damp = exp_neg_square(z)?;
        return Ok(damp * 2.0 - faddeeva64(-z)?);
    }
    if z.im >= 1.0 || z.norm() >= 7.0 {
        return laplace_fraction(z);
    }
    // Here Re(-iz) = Im z < 1, so the Taylor series of erf(-iz) is benign.
    let damp = exp_neg_square(z)?;
    Ok(damp * (C64::new(1.0, 0.0) - erf_taylor(C64::new(z.im, -z.re))))
}

fn overflow(z: C64) -> Error {
    Error::ErfOverflow { re: z.re, im: z.im }
}

fn exp_neg_square(z: C64) -> Result<C64> {
    let e = -(z * z);
    if e.re > EXP_LIMIT {
        return Err(overflow(z));
    }
    Ok(e.exp())
}

fn erf_taylor(z: C64) -> C64 {
    let z2 = -(z * z);
    let mut term = z;
    let mut sum = z;
    for n in 1..400 {
        term = term * z2 / n as f64;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.norm() <= 1e-17 * sum.norm() {
            break;
        }
    }
    sum * FRAC_2_SQRT_PI
}

/// `w(z) = (i/√π) / (z - (1/2)/(z - 1/(z - (3/2)/(z - ...))))`, modified
/// Lentz evaluation. Valid for `Im z >= 0`.
fn laplace_fraction(z: C64) -> Result<C64> {
    let tiny = C64::new(1e-300, 0.0);
    let mut f = if z == C64::new(0.0, 0.0) { tiny } else { z };
    let mut c = f;
    let mut d = C64::new(0.0, 0.0);
    for n in 1..CF_MAX_TERMS {
        let a = -(n as f64) / 2.0;
        d = z + d * a;
        if d.norm_sqr() == 0.0 {
            d = tiny;
        }
        d = d.inv();
        c = z + c.inv() * a;
        if c.norm_sqr() == 0.0 {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).norm() < 1e-16 {
            let scale = FRAC_2_SQRT_PI / 2.0;
            return Ok(C64::new(0.0, scale) / f);
        }
    }
    Err(Error::ErfNoConvergence { re: z.re, im: z.im })
}
