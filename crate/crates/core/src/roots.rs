//! Bracketed root finding for monotone increasing functions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A root with the final bracket and the work it took.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Root<T> {
    pub x: T,
    pub fx: T,
    pub lo: T,
    pub hi: T,
    pub evaluations: usize,
}

/// Root of an increasing `f` on `(lo, hi)` given `f(lo) < 0 < f(hi)`.
///
/// `f_hi = None` means `f` blows up at `hi` (a pole); the first steps then
/// bisect until a finite positive value is seen. Iterates with Illinois
/// false position, falling back to bisection whenever the bracket fails to
/// halve, until `hi - lo <= x_rel * min(|lo|, |hi|)` or `|f(x)| <= f_rel * |x|`
/// (the bracket test has a floor of a few ulps); the last step is a secant
/// polish kept only if it improves `|f|`.
pub fn increasing_root<T: Real>(
    mut f: impl FnMut(T) -> Result<T>,
    mut lo: T,
    mut hi: T,
    mut f_lo: T,
    f_hi: Option<T>,
    x_rel: T,
    f_rel: T,
) -> Result<Root<T>> {
    let x_abs = T::lit(4.0) * T::epsilon() * lo.abs().max(hi.abs());
    let half = T::lit(0.5);
    if !(f_lo < T::zero()) {
        return Err(Error::NoSolution(format!("f({lo}) = {f_lo} is not negative")));
    }
    let mut evaluations = 0;
    let mut f_hi = match f_hi {
        Some(v) if v > T::zero() => v,
        Some(v) => return Err(Error::NoSolution(format!("f({hi}) = {v} is not positive"))),
        None => T::infinity(),
    };
    let mut best = (lo, f_lo);
    let mut side = 0i8;
    let mut width_before = hi - lo;
    for iter in 0..400 {
        if hi - lo <= (x_rel * lo.abs().min(hi.abs())).max(x_abs) || best.1.abs() <= f_rel * best.0.abs() {
            break;
        }
        let secant_ok = f_hi.is_finite() && iter % 3 != 2;
        let mut x = if secant_ok {
            (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        } else {
            half * (lo + hi)
        };
        if !(x > lo && x < hi) {
            x = half * (lo + hi);
        }
        if iter % 3 == 2 {
            // Force progress if three steps did not halve the bracket.
            if hi - lo > half * width_before {
                x = half * (lo + hi);
            }
            width_before = hi - lo;
        }
        let fx = f(x)?;
        evaluations += 1;
        if !fx.is_finite() {
            return Err(Error::Numeric(format!("f({x}) is not finite")));
        }
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx < T::zero() {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi = f_hi * half;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo = f_lo * half;
            }
            side = 1;
        }
        if fx == T::zero() {
            return Ok(Root { x, fx, lo, hi, evaluations });
        }
    }
    // Secant polish between the bracket ends, using true values at the ends.
    if f_hi.is_finite() && hi > lo {
        let fl = f(lo)?;
        let fh = f(hi)?;
        evaluations += 2;
        if fl < T::zero() && fh > T::zero() {
            let x = (lo * fh - hi * fl) / (fh - fl);
            if x > lo && x < hi {
                let fx = f(x)?;
                evaluations += 1;
                if fx.abs() < best.1.abs() {
                    best = (x, fx);
                }
            }
        }
        for (x, fx) in [(lo, fl), (hi, fh)] {
            if fx.abs() < best.1.abs() {
                best = (x, fx);
            }
        }
    }
    Ok(Root {
        x: best.0,
        fx: best.1,
        lo,
        hi,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cubic_root() {
        let f = |x: f64| Ok(x * x * x - 2.0);
        let r = increasing_root(f, 0.0, 3.0, -2.0, Some(25.0), 1e-14, 0.0).unwrap();
        assert!((r.x - 2f64.cbrt()).abs() < 1e-13);
        assert!(r.evaluations < 60);
    }

    #[test]
    fn handles_pole_at_upper_end() {
        // x - 3 + 1/(1 - x) has roots 2 +- sqrt 2; only the smaller lies below the pole.
        let f = |x: f64| Ok(x - 3.0 + 1.0 / (1.0 - x));
        let r = increasing_root(f, -5.0, 1.0, f(-5.0).unwrap(), None, 1e-14, 0.0).unwrap();
        assert!((r.x - (2.0 - 2f64.sqrt())).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn rejects_bad_bracket() {
        let f = |x: f64| Ok(x);
        assert!(increasing_root(f, 1.0, 2.0, 1.0, Some(2.0), 1e-12, 0.0).is_err());
    }
}
