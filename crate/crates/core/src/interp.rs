//! Chebyshev interpolation, used to evaluate `G_mu` at many arguments.

use crate::error::{Error, Result};
use crate::lattice::{ShellTable, DEFAULT_MEMORY_BUDGET};
use crate::params::ModelParams;
use crate::regsums::{occupied_shells, suggested_cutoff, theta_sums};
use crate::scalar::Real;
use crate::sum::Accumulator;

/// Chebyshev series on `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct Chebyshev<T> {
    lo: T,
    hi: T,
    coeffs: Vec<T>,
    deriv: Vec<T>,
}

impl<T: Real> Chebyshev<T> {
    /// First-kind Chebyshev points mapped to `[lo, hi]`.
    pub fn nodes(lo: T, hi: T, n: usize) -> Vec<T> {
        let half = T::lit(0.5);
        (0..n)
            .map(|k| {
                let x = (T::PI() * (T::count(k as u64) + half) / T::count(n as u64)).cos();
                half * (lo + hi) + half * (hi - lo) * x
            })
            .collect()
    }

    /// Interpolant through `values` taken at [`Chebyshev::nodes`].
    pub fn fit(lo: T, hi: T, values: &[T]) -> Self {
        let n = values.len();
        let nn = T::count(n as u64);
        let half = T::lit(0.5);
        let coeffs: Vec<T> = (0..n)
            .map(|j| {
                let acc: Accumulator<T> = values
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        v * (T::PI() * T::count(j as u64) * (T::count(k as u64) + half) / nn).cos()
                    })
                    .collect();
                let c = T::lit(2.0) * acc.value() / nn;
                if j == 0 {
                    c * half
                } else {
                    c
                }
            })
            .collect();
        // c'_{j-1} = c'_{j+1} + 2 j c_j, first term halved, then the chain rule.
        let mut d = vec![T::zero(); n + 1];
        for j in (1..n).rev() {
            d[j - 1] = d[j + 1] + T::lit(2.0) * T::count(j as u64) * coeffs[j];
        }
        d[0] = d[0] * half;
        let scale = T::lit(2.0) / (hi - lo);
        let deriv = d[..n.max(1)].iter().map(|&c| c * scale).collect();
        Self { lo, hi, coeffs, deriv }
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Size of the last two coefficients, a proxy for the truncation error.
    pub fn tail_estimate(&self) -> T {
        let n = self.coeffs.len();
        self.coeffs[n.saturating_sub(2)..]
            .iter()
            .fold(T::zero(), |a, c| a + c.abs())
    }

    fn clenshaw(c: &[T], x: T) -> T {
        let two_x = x + x;
        let (mut b1, mut b2) = (T::zero(), T::zero());
        for &ck in c.iter().skip(1).rev() {
            let b0 = ck + two_x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        c[0] + x * b1 - b2
    }

    fn local(&self, x: T) -> T {
        (x + x - self.lo - self.hi) / (self.hi - self.lo)
    }

    pub fn eval(&self, x: T) -> T {
        Self::clenshaw(&self.coeffs, self.local(x))
    }

    pub fn eval_deriv(&self, x: T) -> T {
        Self::clenshaw(&self.deriv, self.local(x))
    }
}

/// Points per panel of the `G_mu` interpolant.
const PANEL_POINTS: usize = 33;
/// Shells above `mu` summed explicitly instead of interpolated.
const NEAR_SHELLS: usize = 8;
/// Upper bound of the Lebesgue constant for 33 first-kind points.
const LEBESGUE: f64 = 3.3;

/// `G_mu(tau)` on a fixed `tau` range, as explicit nearby shells plus a
/// piecewise Chebyshev fit of the remaining (analytic) part.
///
/// Panels grow geometrically away from the nearest excluded pole so that each
/// converges at the same rate. The reported error bound combines the node
/// enclosures (times the Lebesgue constant) with the trailing coefficients.
#[derive(Debug, Clone)]
pub struct GmuInterpolant<T> {
    a: T,
    inv_area: T,
    occupied: T,
    near: Vec<(T, T)>,
    panels: Vec<Chebyshev<T>>,
    err: T,
    tau_lo: T,
    tau_hi: T,
    s_first: T,
}

impl<T: Real> GmuInterpolant<T> {
    /// Builds the interpolant on `[tau_lo, tau_hi]` with target absolute error `tol`.
    pub fn build(params: &ModelParams<T>, table: &ShellTable<T>, tau_lo: T, tau_hi: T, tol: T) -> Result<Self> {
        let a = params.binding();
        let j1 = occupied_shells(table, params.mu)?;
        let s_first = table.energy(j1);
        if !(tau_lo > -s_first) || !(tau_hi > tau_lo) {
            return Err(Error::Domain(format!(
                "interpolation range [{tau_lo}, {tau_hi}] must lie above -{s_first}"
            )));
        }
        let occupied: Accumulator<T> = (0..j1)
            .map(|j| T::count(table.multiplicities()[j] as u64) / (table.energy(j) + a))
            .collect();

        // Make sure the table reaches far enough for the theta evaluations.
        let scale = a.max(tau_hi.abs()).max(tau_lo.abs()).max(params.mu);
        let need = suggested_cutoff(scale, table.unit());
        let grown;
        let table = if table.cutoff() < need || table.len() <= j1 + NEAR_SHELLS {
            let n_max = (need / table.unit()).ceil().to_u64().unwrap_or(u64::MAX);
            grown = ShellTable::enumerate(table.unit(), n_max, DEFAULT_MEMORY_BUDGET)?;
            &grown
        } else {
            table
        };
        let skip = j1 + NEAR_SHELLS;
        let near: Vec<(T, T)> = (j1..skip)
            .map(|j| (table.energy(j), T::count(table.multiplicities()[j] as u64)))
            .collect();
        let sing = -table.energy(skip);

        let area = params.area();
        let mut panels = Vec::new();
        let mut node_err = T::zero();
        let mut coef_err = T::zero();
        let mut stack = Vec::new();
        // Geometric pre-split: each panel no longer than its distance to `sing`.
        let mut x0 = tau_lo;
        while x0 < tau_hi {
            let x1 = (x0 + (x0 - sing)).min(tau_hi);
            stack.push((x0, x1));
            x0 = x1;
        }
        let target = tol * area / T::lit(4.0);
        // All pending panels share one pass over the table; failures are halved
        // and retried in the next pass.
        let mut pending = stack;
        for _round in 0..40 {
            if pending.is_empty() {
                break;
            }
            let xs: Vec<T> = pending
                .iter()
                .flat_map(|&(lo, hi)| Chebyshev::nodes(lo, hi, PANEL_POINTS))
                .collect();
            let sums = theta_sums(table, skip, a, &xs, target, false)?;
            let mut retry = Vec::new();
            for (k, &(lo, hi)) in pending.iter().enumerate() {
                let chunk = &sums[k * PANEL_POINTS..(k + 1) * PANEL_POINTS];
                let vals: Vec<T> = chunk.iter().map(|s| s.r).collect();
                let cheb = Chebyshev::fit(lo, hi, &vals);
                let mag = vals.iter().fold(T::one(), |m, v| m.max(v.abs()));
                let floor = T::lit(64.0) * T::epsilon() * mag;
                let tail = cheb.tail_estimate();
                let splittable = (hi - lo) > T::lit(1e3) * T::epsilon() * hi.abs().max(T::one());
                if tail > target.max(floor) && splittable {
                    let mid = T::lit(0.5) * (lo + hi);
                    retry.push((lo, mid));
                    retry.push((mid, hi));
                    continue;
                }
                node_err = chunk.iter().fold(node_err, |e, s| e.max(s.r_err));
                coef_err = coef_err.max(tail + floor);
                panels.push(cheb);
            }
            pending = retry;
        }
        if !pending.is_empty() {
            return Err(Error::Numeric("G_mu interpolation did not converge".into()));
        }
        panels.sort_by(|p, q| p.lo().partial_cmp(&q.lo()).expect("finite panel bounds"));
        let err = (T::lit(LEBESGUE) * node_err + coef_err + occupied.rounding_allowance()) / area;
        Ok(Self {
            a,
            inv_area: T::one() / area,
            occupied: occupied.value(),
            near,
            panels,
            err,
            tau_lo,
            tau_hi,
            s_first,
        })
    }

    pub fn range(&self) -> (T, T) {
        (self.tau_lo, self.tau_hi)
    }

    /// Smallest shell energy above `mu`; `G` has its first pole at `-s_first`.
    pub fn s_first(&self) -> T {
        self.s_first
    }

    /// Absolute error bound for [`GmuInterpolant::eval`].
    pub fn error_bound(&self) -> T {
        self.err
    }

    pub fn covers(&self, tau: T) -> bool {
        tau >= self.tau_lo && tau <= self.tau_hi
    }

    fn panel(&self, tau: T) -> &Chebyshev<T> {
        let i = self.panels.partition_point(|p| p.hi() < tau);
        &self.panels[i.min(self.panels.len() - 1)]
    }

    /// `G_mu(tau)`; arguments outside the range are an error.
    pub fn eval(&self, tau: T) -> Result<T> {
        if !self.covers(tau) {
            return Err(Error::Domain(format!(
                "tau = {tau} outside interpolation range [{}, {}]",
                self.tau_lo, self.tau_hi
            )));
        }
        let mut acc = self.occupied + self.panel(tau).eval(tau);
        for &(s, m) in &self.near {
            acc = acc + m * (tau - self.a) / ((s + self.a) * (s + tau));
        }
        Ok(acc * self.inv_area)
    }

    /// `G_mu'(tau)`.
    pub fn eval_deriv(&self, tau: T) -> Result<T> {
        if !self.covers(tau) {
            return Err(Error::Domain(format!("tau = {tau} outside interpolation range")));
        }
        let mut acc = self.panel(tau).eval_deriv(tau);
        for &(s, m) in &self.near {
            acc = acc + m / ((s + tau) * (s + tau));
        }
        Ok(acc * self.inv_area)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regsums::g_mu;
    use std::f64::consts::TAU;

    #[test]
    fn chebyshev_reproduces_smooth_function() {
        let xs = Chebyshev::nodes(0.0, 3.0, 33);
        let vals: Vec<f64> = xs.iter().map(|&x: &f64| (x * 0.7).sin() + x * x).collect();
        let c = Chebyshev::fit(0.0, 3.0, &vals);
        for &x in &[0.0f64, 0.37, 1.5, 2.99] {
            assert!((c.eval(x) - ((x * 0.7).sin() + x * x)).abs() < 1e-14);
            let dd = c.eval_deriv(x) - (0.7 * (x * 0.7).cos() + 2.0 * x);
            assert!(dd.abs() < 1e-11, "{x}: {dd}");
        }
        assert!(c.tail_estimate() < 1e-14);
    }

    #[test]
    fn interpolant_matches_direct_evaluation() {
        let p = ModelParams::new(TAU, -1.0, 50.0).unwrap();
        let t = ShellTable::enumerate(1.0, 1000, DEFAULT_MEMORY_BUDGET).unwrap();
        let s1 = 50.0; // 50 = 1 + 49 = 25 + 25 is a shell, so the first above is 52
        let j1 = occupied_shells(&t, 50.0).unwrap();
        assert_eq!(t.energy(j1), 52.0);
        let gi = GmuInterpolant::build(&p, &t, -51.9, 120.0, 1e-12).unwrap();
        assert!(gi.error_bound() < 1e-11, "{}", gi.error_bound());
        for &tau in &[-51.9, -51.0, -s1, -10.0, 0.0, 1.0, 33.3, 120.0] {
            let d = g_mu(&p, &t, tau, 1e-12).unwrap();
            let v = gi.eval(tau).unwrap();
            assert!((v - d.mid()).abs() <= gi.error_bound() + d.width(), "tau = {tau}: {v} vs {d:?}");
            let h = 1e-4;
            let x = tau.clamp(-51.9 + h, 120.0 - h);
            let fd = (gi.eval(x + h).unwrap() - gi.eval(x - h).unwrap()) / (2.0 * h);
            let dv = gi.eval_deriv(x).unwrap();
            assert!((fd - dv).abs() < 1e-6 * dv.abs().max(1.0), "tau = {tau}: {fd} vs {dv}");
        }
        assert!(gi.eval(-60.0).is_err());
    }
}
