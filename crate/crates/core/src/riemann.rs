//! Executable form of the Riemann-sum comparison for radial lattice sums:
//! `(1/L^2) sum_k f(k^2)` against `(1/2pi) int f(t^2) t dt`.
//!
//! The lattice side is a partial sum over a shell table plus an enclosure of
//! the remainder that is independent of the inequality being checked: it
//! integrates by parts against the counting function `N(s)` and brackets
//! `N` between the areas of disks padded by half a cell diagonal.

use quadrature::double_exponential;

use crate::error::{Error, Result};
use crate::lattice::{ShellTable, DEFAULT_MEMORY_BUDGET};
use crate::regsums::BoundReport;
use crate::sum::Accumulator;

/// Lattice levels enumerated for the lattice side of a check.
const CHECK_LEVELS: u64 = 2_000_000;

/// `int_start^inf h(t) dt` on the compactified variable `t = start + x/(1-x)`.
fn half_line(h: impl Fn(f64) -> f64, start: f64, tol: f64) -> Result<(f64, f64)> {
    let g = |x: f64| {
        if x >= 1.0 {
            return 0.0;
        }
        let d = 1.0 - x;
        let v = h(start + x / d) / (d * d);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let out = double_exponential::integrate(g, 0.0, 1.0, tol);
    let scale = out.integral.abs().max(1e-300);
    if !out.integral.is_finite() || out.error_estimate > tol.max(1e-15) * scale.max(1.0) * 10.0 {
        return Err(Error::Numeric(format!(
            "quadrature did not converge: {} +- {}",
            out.integral, out.error_estimate
        )));
    }
    Ok((out.integral, out.error_estimate))
}

/// Best-effort probe of the caller's contract: non-negative, non-increasing,
/// and decaying fast enough that `s f(s) -> 0`.
fn probe(f: &dyn Fn(f64) -> f64, start: f64) -> Result<()> {
    let mut prev = f(start);
    if !(prev >= 0.0) || !prev.is_finite() {
        return Err(Error::Domain(format!("f({start}) = {prev} must be finite and non-negative")));
    }
    for i in 1..=64 {
        let s = start + (1.0 + start) * (10f64.powf(i as f64 * 12.0 / 64.0) - 1.0);
        let v = f(s);
        if !(v >= 0.0) || v > prev * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("f is not non-negative and decreasing near s = {s}")));
        }
        prev = v;
    }
    let far = 1e12 * (1.0 + start);
    if f(far) * far > 1e-2 * f(start).max(f64::MIN_POSITIVE) * (1.0 + start) {
        return Err(Error::Domain("f does not decay fast enough to be integrable".into()));
    }
    Ok(())
}

/// `(1/L^2) sum_{k^2 > m} f(k^2)` (or over all `k` when `m` is `None`) as an
/// interval, plus quadrature error used along the way.
fn lattice_side(f: &dyn Fn(f64) -> f64, m: Option<f64>, l: f64, tol: f64) -> Result<(f64, f64, f64)> {
    let unit = (std::f64::consts::TAU / l).powi(2);
    let levels = CHECK_LEVELS.max(m.map_or(0, |m| (4.0 * m / unit) as u64));
    let table = ShellTable::<f64>::enumerate(unit, levels, DEFAULT_MEMORY_BUDGET)?;
    let lam = table.cutoff();
    let mut acc = Accumulator::new();
    let mut count = 0u64;
    for (s, mult) in table.shells() {
        count += mult as u64;
        if m.is_some_and(|m| s <= m) {
            continue;
        }
        acc.add(mult as f64 * f(s));
    }
    let c = (unit / 2.0).sqrt();
    let root = lam.sqrt();
    let n_up = std::f64::consts::PI * (root + c).powi(2) / unit;
    let n_lo = std::f64::consts::PI * (root - c).max(0.0).powi(2) / unit;
    let (j1, e1) = half_line(|t| f(t * t) * t, root, tol)?;
    let (j0, e0) = half_line(|t| f(t * t), root, tol)?;
    let k = std::f64::consts::PI / unit;
    let f_lam = f(lam);
    let hi = (n_up - count as f64) * f_lam + k * (2.0 * j1 + 2.0 * c * j0);
    let lo = (n_lo - count as f64) * f_lam + k * (2.0 * j1 - 2.0 * c * j0);
    let quad_err = k * (2.0 * e1 + 2.0 * c * e0);
    let area = l * l;
    let slop = acc.rounding_allowance() + quad_err;
    Ok((
        (acc.value() + lo - slop) / area,
        (acc.value() + hi + slop) / area,
        quad_err / area,
    ))
}

fn check(f: &dyn Fn(f64) -> f64, m: Option<f64>, l: f64, quad_tol: f64) -> Result<BoundReport<f64>> {
    if !(l > 0.0) || !(quad_tol > 0.0) {
        return Err(Error::InvalidParams(format!("need L > 0 and quad_tol > 0, got {l}, {quad_tol}")));
    }
    let start = m.unwrap_or(0.0);
    probe(f, start)?;
    let root = start.sqrt();
    let (sum_lo, sum_hi, _) = lattice_side(f, m, l, quad_tol)?;
    let (i1, e1) = half_line(|t| f(t * t) * t, root, quad_tol)?;
    let (i2, e2) = half_line(|t| f(t * t), root, quad_tol)?;
    let pi = std::f64::consts::PI;
    let integral = i1 / (2.0 * pi);
    let diff_mid = 0.5 * (sum_lo + sum_hi) - integral;
    let lhs = diff_mid.abs();
    let boundary = match m {
        None => 3.0 * f(0.0) / (l * l),
        Some(m) => (4.0 * m.sqrt() / (pi * l) + 6.0 / (l * l)) * f(m),
    };
    let rhs = 2.0 / (pi * l) * i2 + boundary;
    let uncertainty = 0.5 * (sum_hi - sum_lo) + e1 / (2.0 * pi) + 2.0 / (pi * l) * e2;
    Ok(BoundReport::new(lhs, rhs, uncertainty))
}

/// Part (a): `|(1/L^2) sum_k f(k^2) - (1/2pi) int_0^inf f(t^2) t dt|`
/// against `(2/(pi L)) int_0^inf f(t^2) dt + 3 f(0) / L^2`.
///
/// `f` must be non-negative and non-increasing on `[0, inf)` with `s f(s) -> 0`;
/// this is probed at sample points, not proved.
pub fn riemann_check_a(f: &dyn Fn(f64) -> f64, l: f64, quad_tol: f64) -> Result<BoundReport<f64>> {
    check(f, None, l, quad_tol)
}

/// Part (b): the same comparison restricted to `k^2 > m` (strictly) and
/// `t > sqrt m`, with boundary term `(4 sqrt(m)/(pi L) + 6/L^2) f(m)`.
pub fn riemann_check_b(f: &dyn Fn(f64) -> f64, m: f64, l: f64, quad_tol: f64) -> Result<BoundReport<f64>> {
    if !(m > 0.0) {
        return Err(Error::InvalidParams(format!("m = {m} must be positive")));
    }
    check(f, Some(m), l, quad_tol)
}
