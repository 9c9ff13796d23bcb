//! Regularized lattice sums `G_mu(tau)`, the secular sum `S(z)` and the
//! integral-comparison bounds behind their tails.
//!
//! The production evaluator splits `1/x = int_0^inf e^{-tx} dt` at a point
//! `t0`. Above `t0` the lattice sum converges like `e^{-t0 k^2}` and is
//! truncated with an explicit bound; below `t0` the theta function of the
//! lattice is replaced by its Poisson dual, whose leading term integrates in
//! closed form and whose remaining terms are bounded by `e^{-pi^2/(t0 u)}`.
//! The result is an enclosure whose width does not depend on how far the
//! shell table reaches, only on `t0`.
//!
//! The plain integral-comparison tail (partial sum plus a Riemann bound) is
//! kept as [`g_mu_riemann`]; its width decays only like `Lambda^{-3/2}`.

use std::borrow::Cow;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{ShellTable, DEFAULT_MEMORY_BUDGET};
use crate::params::ModelParams;
use crate::scalar::Real;
use crate::special::{ein, phi, psi, tail_f};
use crate::sum::Accumulator;

pub use crate::riemann::{riemann_check_a, riemann_check_b};

/// A partial lattice sum with an enclosure of the omitted remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncatedSum<T> {
    /// Sum over the shells up to `cutoff`.
    pub value: T,
    pub tail_lo: T,
    pub tail_hi: T,
    pub cutoff: T,
}

impl<T: Real> TruncatedSum<T> {
    pub fn exact(value: T, cutoff: T) -> Self {
        Self {
            value,
            tail_lo: T::zero(),
            tail_hi: T::zero(),
            cutoff,
        }
    }

    pub fn lower(&self) -> T {
        self.value + self.tail_lo
    }

    pub fn upper(&self) -> T {
        self.value + self.tail_hi
    }

    /// Midpoint of the enclosure of the full sum.
    pub fn mid(&self) -> T {
        self.value + T::lit(0.5) * (self.tail_lo + self.tail_hi)
    }

    pub fn width(&self) -> T {
        self.tail_hi - self.tail_lo
    }

    pub fn contains(&self, x: T) -> bool {
        self.lower() <= x && x <= self.upper()
    }

    fn scaled(self, k: T) -> Self {
        let (lo, hi) = if k >= T::zero() {
            (self.tail_lo * k, self.tail_hi * k)
        } else {
            (self.tail_hi * k, self.tail_lo * k)
        };
        Self {
            value: self.value * k,
            tail_lo: lo,
            tail_hi: hi,
            cutoff: self.cutoff,
        }
    }
}

/// Outcome of checking an inequality `lhs <= rhs` between computed quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport<T> {
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
    /// `rhs - lhs`.
    pub slack: T,
    /// Combined enclosure half-widths of both sides.
    pub uncertainty: T,
}

impl<T: Real> BoundReport<T> {
    pub fn new(lhs: T, rhs: T, uncertainty: T) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs + uncertainty,
            slack: rhs - lhs,
            uncertainty,
        }
    }
}

// ---------------------------------------------------------------------------
// Theta-split kernel

/// Split parameters tried in order until the truncation bound fits.
const SPLIT_C: [f64; 5] = [8.0, 12.0, 16.0, 20.0, 24.0];
/// Margin on the dual terms: `q e^{c} <= e^{-DUAL_MARGIN}`.
const DUAL_MARGIN: f64 = 40.0;

/// Full infinite sums over shells `j >= skip`:
/// `r = sum m_j [1/(s_j + a) - 1/(s_j + b)]` and `r2 = sum m_j / (s_j + b)^2`,
/// each with an absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSums<T> {
    pub r: T,
    pub r_err: T,
    pub r2: T,
    pub r2_err: T,
}

/// Table cutoff that lets [`theta_sums`] reach double-precision tolerances
/// when the largest of `s_skip`, `|b|`, `a` is `scale`.
pub fn suggested_cutoff<T: Real>(scale: T, unit: T) -> T {
    T::lit(4.0) * scale + T::lit(400.0) * unit
}

/// Upper bound for `sum_{k^2 > lam} e^{-t k^2}` over the lattice of side `l`.
fn gauss_tail<T: Real>(t: T, lam: T, l: T) -> T {
    let pi = T::PI();
    let sq = lam.sqrt();
    (-t * lam).exp()
        * (l * l / (T::lit(4.0) * pi * t) + l / (pi * t * sq) + T::lit(4.0) * l * sq / pi + T::lit(6.0))
}

/// Sum of the dual theta terms, `(theta_dual)^2 - 1 <= beta(q)`.
fn dual_beta<T: Real>(q: T) -> T {
    let one = T::one();
    let r = q / (one - q);
    T::lit(4.0) * r + T::lit(4.0) * r * r
}

/// Evaluates [`ThetaSums`] for several `b` sharing `a` and `skip`.
///
/// Requires `a > 0` and `s_skip + b > 0`. `tol` is the absolute budget for
/// the truncation part of `r_err`; if no split point achieves it on this
/// table an out-of-range error asks for a larger one. With `want_r2` false
/// the `r2` fields are left at zero.
pub fn theta_sums<T: Real>(
    table: &ShellTable<T>,
    skip: usize,
    a: T,
    bs: &[T],
    tol: T,
    want_r2: bool,
) -> Result<Vec<ThetaSums<T>>> {
    let zero = T::zero();
    let one = T::one();
    if !(a > zero) {
        return Err(Error::Domain(format!("regulator a = {a} must be positive")));
    }
    if skip >= table.len() {
        return Err(Error::OutOfRange {
            requested: table.cutoff().to_f64_lossy() * 2.0,
            cutoff: table.cutoff().to_f64_lossy(),
        });
    }
    let s_skip = table.energy(skip);
    let mut scale = a.max(s_skip);
    for &b in bs {
        if !(s_skip + b > zero) || !b.is_finite() {
            return Err(Error::Domain(format!("b = {b} puts shell {s_skip} at a non-positive denominator")));
        }
        scale = scale.max(b.abs());
    }
    let u = table.unit();
    let pi = T::PI();
    let l = T::TAU() / u.sqrt();
    let b_min = bs.iter().copied().fold(T::infinity(), T::min);
    let trunc_at = |t0: T, lam: T| {
        gauss_tail(t0, lam, l) * ((-t0 * a).exp() / (lam + a) + (-t0 * b_min).exp() / (lam + b_min))
    };
    let budget = T::lit(0.25) * tol;

    // Pick the first split point whose truncation bound fits the budget.
    let full = table.cutoff();
    let t0 = SPLIT_C
        .iter()
        .map(|&c| {
            let c = T::lit(c);
            (c / scale).min(pi * pi / ((T::lit(DUAL_MARGIN) + c) * u))
        })
        .find(|&t0| trunc_at(t0, full) <= budget)
        .ok_or(Error::OutOfRange {
            requested: suggested_cutoff(scale, u).to_f64_lossy(),
            cutoff: full.to_f64_lossy(),
        })?;
    // Then the shortest prefix of the table that still meets it.
    let (mut lo, mut hi) = (skip, table.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if trunc_at(t0, table.energy(mid)) <= budget {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let last = hi;
    let lam = table.energy(last);

    let eps4 = T::lit(4.0) * T::epsilon();
    let ea = (-t0 * a).exp();
    let ebs: Vec<T> = bs.iter().map(|&b| (-t0 * b).exp()).collect();
    let mut r_acc = vec![Accumulator::new(); bs.len()];
    let mut r2_acc = vec![Accumulator::new(); bs.len()];
    let mut extra = vec![zero; bs.len()];
    let mult = table.multiplicities();

    // Shells handled by subtraction in the small-t part:
    // phi(x + b) = (1 - e^{-t0 x} e^{-t0 b}) / (x + b), exact form when t0 (x + b) is small.
    let half = T::lit(0.5);
    for j in 0..skip {
        let x = table.energy(j);
        let m = T::count(mult[j] as u64);
        let en = (-t0 * x).exp();
        let pa = m * phi(t0, x + a);
        for (i, &b) in bs.iter().enumerate() {
            let xb = x + b;
            let y = t0 * xb;
            let e = en * ebs[i];
            if y.abs() < half {
                let pb = phi(t0, xb);
                r_acc[i].add(m * pb - pa);
                if want_r2 {
                    r2_acc[i].add(-m * psi(t0, xb));
                }
            } else {
                let inv = one / xb;
                r_acc[i].add(m * (one - e) * inv - pa);
                extra[i] = extra[i] + m * eps4 * (one + e) * inv.abs();
                if want_r2 {
                    r2_acc[i].add(-m * (one - e * (one + y)) * inv * inv);
                    extra[i] = extra[i] + m * eps4 * (one + e * (one + y.abs())) * inv * inv;
                }
            }
        }
    }
    // Large-t part over the included shells.
    for j in skip..=last {
        let x = table.energy(j);
        let en = (-t0 * x).exp();
        let m = T::count(mult[j] as u64);
        let ta = m * en * ea / (x + a);
        for (i, &b) in bs.iter().enumerate() {
            let inv = one / (x + b);
            let w = m * en * ebs[i] * inv;
            r_acc[i].add(ta - w);
            if want_r2 {
                r2_acc[i].add(w * (t0 + inv));
            }
        }
    }

    let gt = gauss_tail(t0, lam, l);
    let q = (-pi * pi / (t0 * u)).exp();
    let beta = dual_beta(q);
    let ein_a = ein(a * t0);
    let mut out = Vec::with_capacity(bs.len());
    for (i, &b) in bs.iter().enumerate() {
        let mut r = r_acc[i];
        let ein_b = ein(b * t0);
        r.add(pi / u * ein_b);
        r.add(-(pi / u * ein_a));
        let grow = (t0 * (-b).max(zero)).exp();
        let dual_r = pi / u * (b - a).abs() * grow * t0 * beta;
        let trunc_r = gt * (ea / (lam + a) + ebs[i] / (lam + b));
        let (r2, r2_err) = if want_r2 {
            let mut r2 = r2_acc[i];
            r2.add(pi / u * phi(t0, b));
            let dual_r2 = pi / u * t0 * grow * beta;
            let xb = lam + b;
            let trunc_r2 = gt * ebs[i] * (t0 / xb + one / (xb * xb));
            (r2.value(), dual_r2 + trunc_r2 + r2.rounding_allowance() + extra[i])
        } else {
            (zero, zero)
        };
        out.push(ThetaSums {
            r: r.value(),
            r_err: dual_r + trunc_r + r.rounding_allowance() + extra[i],
            r2,
            r2_err,
        });
    }
    Ok(out)
}

/// Rebuilds a larger table until `f` stops asking for one.
pub(crate) fn with_growing_table<T: Real, R>(
    table: &ShellTable<T>,
    mut f: impl FnMut(&ShellTable<T>) -> Result<R>,
) -> Result<R> {
    let mut current: Cow<'_, ShellTable<T>> = Cow::Borrowed(table);
    for _ in 0..8 {
        match f(&current) {
            Err(Error::OutOfRange { requested, cutoff }) if requested > cutoff => {
                let want = T::lit(requested).max(current.cutoff() * T::lit(2.0));
                let n_max = (want / table.unit()).ceil().to_u64().unwrap_or(u64::MAX);
                current = Cow::Owned(ShellTable::enumerate(table.unit(), n_max, DEFAULT_MEMORY_BUDGET)?);
            }
            other => return other,
        }
    }
    Err(Error::Numeric("shell table kept growing without meeting the tolerance".into()))
}

// ---------------------------------------------------------------------------
// G_mu

/// Number of shells with `s_j <= mu`, after checking the table reaches past `mu`.
pub fn occupied_shells<T: Real>(table: &ShellTable<T>, mu: T) -> Result<usize> {
    table.check_energy(mu)?;
    let level = table.level_at_or_below(mu).unwrap_or(0);
    let j1 = table.shells_through(level);
    if j1 >= table.len() {
        return Err(Error::OutOfRange {
            requested: (mu + table.unit() * T::lit(8.0)).to_f64_lossy(),
            cutoff: table.cutoff().to_f64_lossy(),
        });
    }
    Ok(j1)
}

/// `sum_{s_j <= mu} m_j / (s_j + a)`.
fn occupied_part<T: Real>(table: &ShellTable<T>, j1: usize, a: T) -> Accumulator<T> {
    (0..j1)
        .map(|j| T::count(table.multiplicities()[j] as u64) / (table.energy(j) + a))
        .collect()
}

fn check_tau<T: Real>(table: &ShellTable<T>, j1: usize, tau: T) -> Result<()> {
    let s1 = table.energy(j1);
    if !(tau > -s1) || !tau.is_finite() {
        return Err(Error::Domain(format!(
            "tau = {tau} must exceed -{s1}, minus the first shell energy above mu"
        )));
    }
    Ok(())
}

/// Partial sum `sum_{j1 <= j, s_j <= upto} m_j (tau - a) / ((s_j + a)(s_j + tau))`.
fn unoccupied_partial<T: Real>(table: &ShellTable<T>, j1: usize, a: T, tau: T, upto: T) -> Accumulator<T> {
    let d = tau - a;
    let mut acc = Accumulator::new();
    for j in j1..table.len() {
        let s = table.energy(j);
        if s > upto {
            break;
        }
        acc.add(T::count(table.multiplicities()[j] as u64) * d / ((s + a) * (s + tau)));
    }
    acc
}

/// `G_mu(tau)` with a certified enclosure of width at most `tol * max(1, |G|)`.
///
/// Domain: `tau > -s_1` where `s_1` is the first shell above `mu`. The
/// shell table is enlarged internally if it is too short for `tol`.
pub fn g_mu<T: Real>(params: &ModelParams<T>, table: &ShellTable<T>, tau: T, tol: T) -> Result<TruncatedSum<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidParams(format!("tolerance {tol} must be positive")));
    }
    let a = params.binding();
    let inv_area = T::one() / params.area();
    with_growing_table(table, |t| {
        let j1 = occupied_shells(t, params.mu)?;
        check_tau(t, j1, tau)?;
        let occ = occupied_part(t, j1, a);
        if tau == a {
            return Ok(TruncatedSum::exact(occ.value() * inv_area, t.cutoff()));
        }
        let theta = theta_sums(t, j1, a, &[tau], tol * params.area(), false)?[0];
        let partial = unoccupied_partial(t, j1, a, tau, t.cutoff());
        let rest = theta.r - partial.value();
        let err = theta.r_err + partial.rounding_allowance() + occ.rounding_allowance();
        let mut value = occ;
        if err * inv_area > tol * (value.value() + partial.value()).abs().max(params.area()) * inv_area {
            return Err(Error::Precision(format!(
                "G_mu enclosure width {} exceeds tolerance {tol}",
                err * inv_area
            )));
        }
        value.merge(&partial);
        Ok(TruncatedSum {
            value: value.value(),
            tail_lo: rest - err,
            tail_hi: rest + err,
            cutoff: t.cutoff(),
        }
        .scaled(inv_area))
    })
}

/// `G_mu^{(n)}(tau)`: the same sum restricted to `k^2 <= n`, no tail.
pub fn g_mu_truncated<T: Real>(params: &ModelParams<T>, table: &ShellTable<T>, tau: T, n: T) -> Result<T> {
    table.check_energy(n)?;
    let j1 = occupied_shells(table, params.mu)?;
    check_tau(table, j1, tau)?;
    let a = params.binding();
    let upto = table.level_at_or_below(n).map(|l| T::count(l) * table.unit());
    let Some(upto) = upto else {
        return Err(Error::Domain(format!("truncation n = {n} must be non-negative")));
    };
    let jn = table.shells_through(table.level_at_or_below(n).unwrap_or(0));
    let mut acc = occupied_part(table, j1.min(jn), a);
    acc.merge(&unoccupied_partial(table, j1, a, tau, upto));
    Ok(acc.value() / params.area())
}

/// `G_mu(tau)` as the partial sum over the whole table plus the direct
/// integral-comparison enclosure of the remainder `k^2 > cutoff`.
pub fn g_mu_riemann<T: Real>(params: &ModelParams<T>, table: &ShellTable<T>, tau: T) -> Result<TruncatedSum<T>> {
    let j1 = occupied_shells(table, params.mu)?;
    check_tau(table, j1, tau)?;
    let a = params.binding();
    let lam = table.cutoff();
    let mut acc = occupied_part(table, j1, a);
    acc.merge(&unoccupied_partial(table, j1, a, tau, lam));
    let inv_area = T::one() / params.area();
    let pi = T::PI();
    let l = params.l;
    // Summand (tau - a) / ((s + a)(s + tau)) keeps one sign and decreases in modulus.
    let center = ((lam + tau) / (lam + a)).ln() / (T::lit(4.0) * pi);
    let int_abs = ((tail_f(a / lam) - tail_f(tau / lam)) / lam.sqrt()).abs();
    let g_lam = ((tau - a) / ((lam + a) * (lam + tau))).abs();
    let radius = T::lit(2.0) / (pi * l) * int_abs
        + (T::lit(4.0) * lam.sqrt() / (pi * l) + T::lit(6.0) * inv_area) * g_lam
        + acc.rounding_allowance() * inv_area;
    Ok(TruncatedSum {
        value: acc.value() * inv_area,
        tail_lo: center - radius,
        tail_hi: center + radius,
        cutoff: lam,
    })
}

/// `K(tau~, mu~, L~)` from the logarithmic law for `G_mu`.
pub fn log_law_k<T: Real>(tau_t: T, mu_t: T, l_t: T) -> T {
    let d = mu_t + tau_t.min(T::one());
    T::one()
        + T::lit(3.0) / l_t
        + T::one() / d.sqrt()
        + (T::lit(4.0) * mu_t.sqrt() / T::PI() + T::lit(6.0) / l_t) / d
}

/// Checks `|G_mu(tau) - log(mu~ + tau~) / (4 pi)| <= K / L~` for `tau > -mu`.
pub fn g_mu_log_law<T: Real>(params: &ModelParams<T>, table: &ShellTable<T>, tau: T, tol: T) -> Result<BoundReport<T>> {
    if !(tau > -params.mu) {
        return Err(Error::Domain(format!("log law needs tau = {tau} > -mu = {}", -params.mu)));
    }
    let g = g_mu(params, table, tau, tol)?;
    let tau_t = tau / params.binding();
    let target = (params.mu_tilde + tau_t).ln() / (T::lit(4.0) * T::PI());
    let lhs = (g.mid() - target).abs();
    let rhs = log_law_k(tau_t, params.mu_tilde, params.l_tilde) / params.l_tilde;
    Ok(BoundReport::new(lhs, rhs, T::lit(0.5) * g.width()))
}

// ---------------------------------------------------------------------------
// Secular sum

/// `S(z)` and `S'(z)`, each with its own enclosure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecularSum<T> {
    pub s: TruncatedSum<T>,
    pub ds: TruncatedSum<T>,
}

/// Index of a shell sitting at `z` to within a few ulps, if any.
fn shell_at<T: Real>(table: &ShellTable<T>, z: T) -> Option<usize> {
    let level = table.level_at_or_below(z)?;
    let j = table.shells_through(level);
    let near = |j: usize| {
        let s = table.energy(j);
        (s - z).abs() <= T::lit(8.0) * T::epsilon() * s.abs().max(table.unit())
    };
    [j.checked_sub(1), Some(j).filter(|&j| j < table.len())]
        .into_iter()
        .flatten()
        .find(|&j| near(j))
}

/// `S(z) = (1/L^2) sum_k [1/(k^2 - E_B) - 1/(k^2 - z)]` and its derivative
/// `S'(z) = -(1/L^2) sum_k 1/(k^2 - z)^2`.
///
/// The enclosure of `S` has width at most `tol * max(1, |S|)`.
pub fn secular_sum<T: Real>(params: &ModelParams<T>, table: &ShellTable<T>, z: T, tol: T) -> Result<SecularSum<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidParams(format!("tolerance {tol} must be positive")));
    }
    if !z.is_finite() {
        return Err(Error::Domain(format!("z = {z}")));
    }
    if let Some(j) = shell_at(table, z) {
        return Err(Error::Pole {
            z: z.to_f64_lossy(),
            shell: table.energy(j).to_f64_lossy(),
        });
    }
    let a = params.binding();
    let inv_area = T::one() / params.area();
    with_growing_table(table, |t| {
        table_check_secular(t, z)?;
        let skip = t.level_at_or_below(z).map_or(0, |l| t.shells_through(l));
        let mut below = Accumulator::new();
        let mut below2 = Accumulator::new();
        for j in 0..skip {
            let s = t.energy(j);
            let m = T::count(t.multiplicities()[j] as u64);
            below.add(m * (z + a) / ((s + a) * (z - s)));
            below2.add(m / ((s - z) * (s - z)));
        }
        let theta = theta_sums(t, skip, a, &[-z], tol * params.area(), true)?[0];
        let mut part = Accumulator::new();
        let mut part2 = Accumulator::new();
        for j in skip..t.len() {
            let s = t.energy(j);
            let m = T::count(t.multiplicities()[j] as u64);
            part.add(-m * (z + a) / ((s + a) * (s - z)));
            part2.add(m / ((s - z) * (s - z)));
        }
        let err = theta.r_err + part.rounding_allowance() + below.rounding_allowance();
        let err2 = theta.r2_err + part2.rounding_allowance() + below2.rounding_allowance();
        if err > tol * (below.value() + part.value()).abs().max(params.area()) {
            return Err(Error::Precision(format!("S enclosure width {} exceeds {tol}", err * inv_area)));
        }
        let rest = theta.r - part.value();
        let rest2 = theta.r2 - part2.value();
        let mut value = below;
        value.merge(&part);
        let mut value2 = below2;
        value2.merge(&part2);
        let s = TruncatedSum {
            value: value.value(),
            tail_lo: rest - err,
            tail_hi: rest + err,
            cutoff: t.cutoff(),
        }
        .scaled(inv_area);
        let ds = TruncatedSum {
            value: value2.value(),
            tail_lo: rest2 - err2,
            tail_hi: rest2 + err2,
            cutoff: t.cutoff(),
        }
        .scaled(-inv_area);
        Ok(SecularSum { s, ds })
    })
}

fn table_check_secular<T: Real>(table: &ShellTable<T>, z: T) -> Result<()> {
    // The first shell above z must be in the table.
    if z >= table.cutoff() {
        return Err(Error::OutOfRange {
            requested: (z * T::lit(2.0) + table.unit()).to_f64_lossy(),
            cutoff: table.cutoff().to_f64_lossy(),
        });
    }
    Ok(())
}

/// `sum_{j >= skip} m_j / (s_j + b)^2 / L^2` with enclosure, growing the
/// table as needed.
pub fn inverse_square_sum<T: Real>(
    params: &ModelParams<T>,
    table: &ShellTable<T>,
    skip_through: T,
    b: T,
    tol: T,
) -> Result<TruncatedSum<T>> {
    let inv_area = T::one() / params.area();
    with_growing_table(table, |t| {
        t.check_energy(skip_through)?;
        let skip = t.level_at_or_below(skip_through).map_or(0, |l| t.shells_through(l));
        let theta = theta_sums(t, skip, params.binding(), &[b], tol * params.area(), true)?[0];
        let mut part = Accumulator::new();
        for j in skip..t.len() {
            let x = t.energy(j) + b;
            part.add(T::count(t.multiplicities()[j] as u64) / (x * x));
        }
        let err = theta.r2_err + part.rounding_allowance();
        let rest = theta.r2 - part.value();
        Ok(TruncatedSum {
            value: part.value(),
            tail_lo: rest - err,
            tail_hi: rest + err,
            cutoff: t.cutoff(),
        }
        .scaled(inv_area))
    })
}
