//! The polaron equation, the constant `r` that perturbs it, and the
//! perturbed equation whose root is a lower bound for the ground state.
//!
//! With `tau_j = -s_j - e`, the polaron function is
//! `F(e) = e + (1/L^2) sum_{s_j <= mu} m_j / G_mu(tau_j)`.
//! `G_mu` is increasing, so `F` is increasing between its poles, which sit
//! where some `tau_j` hits the zero `tau*` of `G_mu`. The first pole from the
//! left is at `e = -s_J - tau*` for the Fermi shell `s_J`, and `F` has
//! exactly one root below it. That root is the polaron energy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::GmuInterpolant;
use crate::lattice::{count_fermions, ShellTable};
use crate::params::ModelParams;
use crate::regsums::{g_mu, inverse_square_sum, occupied_shells, BoundReport};
use crate::roots::increasing_root;
use crate::scalar::Real;
use crate::sum::Accumulator;

/// Lowest root of the polaron equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolaronSolution<T> {
    pub e_p: T,
    /// `|F(e_p)|`.
    pub residual: T,
    pub bracket: (T, T),
    pub evaluations: usize,
    pub tol: T,
    /// Zero of `G_mu` when it lies above `-s_J`, giving the first pole of `F`.
    pub g_zero: Option<T>,
    /// Midpoints of sign changes of `F` seen by the diagnostic scan over
    /// `(E_B - mu, 0)`, pole crossings excluded.
    pub sign_changes: Vec<T>,
}

impl<T: Real> PolaronSolution<T> {
    /// `z_P = |e_P|`.
    pub fn z_p(&self) -> T {
        self.e_p.abs()
    }

    /// `z_P / |E_B|`.
    pub fn z_p_tilde(&self, params: &ModelParams<T>) -> T {
        self.z_p() / params.binding()
    }
}

/// The computable majorant `r_bar >= r_{mu, lambda}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RBarBound<T> {
    /// `N(mu) / L^2`.
    pub eta_norm_sq: T,
    /// Upper enclosure of `(1/L^2) sum_{k^2 > mu} (k^2 - mu + |e_P|)^{-2}`.
    pub a_norm_sq_bound: T,
    pub r_bar: T,
}

impl<T: Real> RBarBound<T> {
    pub fn zero() -> Self {
        Self {
            eta_norm_sq: T::zero(),
            a_norm_sq_bound: T::zero(),
            r_bar: T::zero(),
        }
    }
}

/// Root of the perturbed polaron equation, as a shift `lambda - E_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbedSolution<T> {
    pub lambda_shift: T,
    pub residual: T,
    pub r_bar_used: T,
    pub hypothesis_ok: bool,
    pub bracket: (T, T),
    pub evaluations: usize,
}

/// `-mu / log(mu~)`, defined for `mu~ > 1`.
pub fn polaron_asymptote<T: Real>(params: &ModelParams<T>) -> Result<T> {
    let log = params
        .log_mu_tilde()
        .ok_or_else(|| Error::Domain(format!("asymptote needs mu~ > 1, got {}", params.mu_tilde)))?;
    Ok(-params.mu / log)
}

/// `E_B - mu`, the shift below which the ground state cannot go.
pub fn naive_lower_shift<T: Real>(params: &ModelParams<T>) -> T {
    params.e_b - params.mu
}

/// Shared state for the polaron solves at one parameter point: the occupied
/// shells and an interpolant of `G_mu` over the arguments they need.
#[derive(Debug, Clone)]
pub struct PolaronContext<'a, T> {
    params: ModelParams<T>,
    table: &'a ShellTable<T>,
    tol: T,
    occupied: Vec<(T, T)>,
    interp: GmuInterpolant<T>,
}

impl<'a, T: Real> PolaronContext<'a, T> {
    pub fn new(params: &ModelParams<T>, table: &'a ShellTable<T>, tol: T) -> Result<Self> {
        if !(tol > T::zero()) {
            return Err(Error::InvalidParams(format!("tolerance {tol} must be positive")));
        }
        let j1 = occupied_shells(table, params.mu)?;
        let occupied: Vec<(T, T)> = (0..j1)
            .map(|j| (table.energy(j), T::count(table.multiplicities()[j] as u64)))
            .collect();
        let s_fermi = occupied[j1 - 1].0;
        let hi = T::lit(2.0) * (params.mu + params.binding());
        let interp = GmuInterpolant::build(params, table, -s_fermi, hi, Self::g_tol(tol))?;
        Ok(Self {
            params: *params,
            table,
            tol,
            occupied,
            interp,
        })
    }

    fn g_tol(tol: T) -> T {
        (tol * T::lit(1e-2)).max(T::lit(1e-13))
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn table(&self) -> &'a ShellTable<T> {
        self.table
    }

    pub fn tol(&self) -> T {
        self.tol
    }

    /// Occupied shells `(s_j, m_j)`, `s_j <= mu`.
    pub fn occupied(&self) -> &[(T, T)] {
        &self.occupied
    }

    pub fn fermi_shell(&self) -> T {
        self.occupied[self.occupied.len() - 1].0
    }

    /// `G_mu(tau)` from the interpolant, extending it when `tau` is above its range.
    pub fn g(&self, tau: T) -> Result<T> {
        self.interp.eval(tau)
    }

    pub fn g_error(&self) -> T {
        self.interp.error_bound()
    }

    /// Rebuilds the interpolant if `tau_hi` lies above its range.
    pub fn extend_to(&mut self, tau_hi: T) -> Result<()> {
        let (lo, hi) = self.interp.range();
        if tau_hi > hi {
            let new_hi = tau_hi * T::lit(2.0) + self.params.binding();
            self.interp = GmuInterpolant::build(&self.params, self.table, lo, new_hi, Self::g_tol(self.tol))?;
        }
        Ok(())
    }

    /// `e + (1/L^2) sum m_j / (G_mu(-s_j - e) - r)` and an error bound from
    /// the interpolation error of `G_mu`.
    pub fn shifted_function(&self, e: T, r: T) -> Result<(T, T)> {
        let g_err = self.interp.error_bound();
        let mut acc = Accumulator::new();
        let mut err = T::zero();
        for &(s, m) in &self.occupied {
            let d = self.interp.eval(-s - e)? - r;
            if d.abs() <= g_err {
                return Err(Error::Precision(format!(
                    "G_mu(-{s} - {e}) - r = {d} is within its error {g_err} of zero; tighten the sum tolerance"
                )));
            }
            acc.add(m / d);
            err = err + m * g_err / (d * d);
        }
        let inv_area = T::one() / self.params.area();
        Ok((e + acc.value() * inv_area, (err + acc.rounding_allowance()) * inv_area))
    }

    /// The polaron function `F(e)`.
    pub fn polaron_function(&self, e: T) -> Result<T> {
        self.shifted_function(e, T::zero()).map(|v| v.0)
    }

    /// Zero of `G_mu` in `(-s_J, |E_B|)` if `G_mu(-s_J) < 0`.
    fn g_zero(&self) -> Result<Option<T>> {
        let lo = -self.fermi_shell();
        let g_lo = self.g(lo)?;
        if g_lo > self.g_error() {
            return Ok(None);
        }
        let hi = self.params.binding();
        let g_hi = self.g(hi)?;
        let root = increasing_root(|t| self.g(t), lo, hi, g_lo.min(-T::min_positive_value()), Some(g_hi), T::epsilon(), T::zero())?;
        Ok(Some(root.x))
    }

    /// Lowest root of `F` on `(E_B - mu, min(0, first pole))`.
    pub fn solve(&self) -> Result<PolaronSolution<T>> {
        let e_lo = naive_lower_shift(&self.params);
        let g_zero = self.g_zero()?;
        let (e_hi, f_hi) = match g_zero {
            None => (T::zero(), Some(self.polaron_function(T::zero())?)),
            Some(tz) => (-self.fermi_shell() - tz, None),
        };
        let f_lo = self.polaron_function(e_lo)?;
        if f_lo.abs() <= self.tol * T::lit(0.25) * e_lo.abs() {
            // At mu = 0 the single-hole equation is solved by E_B itself.
            return Ok(PolaronSolution {
                e_p: e_lo,
                residual: f_lo.abs(),
                bracket: (e_lo, e_lo),
                evaluations: 1,
                tol: self.tol,
                g_zero,
                sign_changes: Vec::new(),
            });
        }
        if f_lo > T::zero() {
            return Err(Error::NoSolution(format!("F(E_B - mu) = {f_lo} is not negative")));
        }
        let sign_changes = self.scan(e_lo, g_zero);
        let root = increasing_root(
            |e| self.polaron_function(e),
            e_lo,
            e_hi,
            f_lo,
            f_hi,
            self.tol * T::lit(0.5),
            self.tol * T::lit(0.25),
        )?;
        let residual = root.fx.abs();
        if residual > self.tol * root.x.abs() {
            return Err(Error::Precision(format!(
                "polaron residual {residual} above {} at e = {}",
                self.tol * root.x.abs(),
                root.x
            )));
        }
        Ok(PolaronSolution {
            e_p: root.x,
            residual,
            bracket: (root.lo, root.hi),
            evaluations: root.evaluations + 2,
            tol: self.tol,
            g_zero,
            sign_changes,
        })
    }

    /// 64 probes, log-spaced from `E_B - mu` toward zero.
    fn scan(&self, e_lo: T, g_zero: Option<T>) -> Vec<T> {
        let probes: Vec<T> = (0..64)
            .map(|k| e_lo * T::lit(10f64.powf(-6.0 * k as f64 / 63.0)))
            .collect();
        let values: Vec<Option<T>> = probes.iter().map(|&e| self.polaron_function(e).ok()).collect();
        let pole_between = |a: T, b: T| match g_zero {
            None => false,
            Some(tz) => self
                .occupied
                .iter()
                .any(|&(s, _)| -s - tz > a && -s - tz < b),
        };
        let mut out = Vec::new();
        for k in 1..probes.len() {
            if let (Some(fa), Some(fb)) = (values[k - 1], values[k]) {
                if (fa < T::zero()) != (fb < T::zero()) && !pole_between(probes[k - 1], probes[k]) {
                    out.push(T::lit(0.5) * (probes[k - 1] + probes[k]));
                }
            }
        }
        out
    }

    /// Root of the perturbed equation `e + (1/L^2) sum m_j / (G_mu(-s_j - e) - r) = 0`
    /// at or below `e_p`. The caller is responsible for the gap hypothesis.
    pub fn solve_perturbed(&mut self, rbar: &RBarBound<T>, e_p: T) -> Result<PerturbedSolution<T>> {
        let r = rbar.r_bar;
        if r == T::zero() {
            let residual = self.polaron_function(e_p)?.abs();
            return Ok(PerturbedSolution {
                lambda_shift: e_p,
                residual,
                r_bar_used: r,
                hypothesis_ok: true,
                bracket: (e_p, e_p),
                evaluations: 1,
            });
        }
        let hi = e_p;
        let h_hi = self.shifted_function(hi, r)?.0;
        if h_hi <= T::zero() {
            return Err(Error::Numeric(format!("perturbed function at e_P is {h_hi}, expected positive")));
        }
        let mut lo = naive_lower_shift(&self.params).min(hi * T::lit(2.0));
        let mut evaluations = 1;
        let mut h_lo;
        let mut tries = 0;
        loop {
            self.extend_to(-lo)?;
            h_lo = self.shifted_function(lo, r)?.0;
            evaluations += 1;
            if h_lo < T::zero() {
                break;
            }
            tries += 1;
            if tries > 60 {
                return Err(Error::Numeric("no sign change of the perturbed function below e_P".into()));
            }
            lo = hi - (hi - lo) * T::lit(2.0);
        }
        let this = &*self;
        let root = increasing_root(
            |e| this.shifted_function(e, r).map(|v| v.0),
            lo,
            hi,
            h_lo,
            Some(h_hi),
            this.tol * T::lit(0.5),
            this.tol * T::lit(0.25),
        )?;
        let residual = root.fx.abs();
        if residual > self.tol * root.x.abs() {
            return Err(Error::Precision(format!("perturbed residual {residual} too large")));
        }
        Ok(PerturbedSolution {
            lambda_shift: root.x,
            residual,
            r_bar_used: r,
            hypothesis_ok: true,
            bracket: (root.lo, root.hi),
            evaluations: evaluations + root.evaluations,
        })
    }
}

/// Lowest root `e_P` of the polaron equation.
pub fn solve_polaron<T: Real>(params: &ModelParams<T>, table: &ShellTable<T>, tol: T) -> Result<PolaronSolution<T>> {
    PolaronContext::new(params, table, tol)?.solve()
}

/// `r_bar = 2 sqrt(N/L^2 * A)` with `A` the upper enclosure of
/// `(1/L^2) sum_{k^2 > mu} (k^2 - mu + |e_p|)^{-2}`.
pub fn r_bar<T: Real>(params: &ModelParams<T>, table: &ShellTable<T>, e_p: T, tol: T) -> Result<RBarBound<T>> {
    if !(e_p < T::zero()) {
        return Err(Error::Domain(format!("e_p = {e_p} must be negative")));
    }
    let n = count_fermions(table, params.mu)?;
    let eta = T::count(n) / params.area();
    let a = inverse_square_sum(params, table, params.mu, e_p.abs() - params.mu, tol)?;
    let a_up = a.upper().max(T::zero());
    Ok(RBarBound {
        eta_norm_sq: eta,
        a_norm_sq_bound: a_up,
        r_bar: T::lit(2.0) * (eta * a_up).sqrt(),
    })
}

/// `r_bar < G_mu(-mu - e_p)` using the lower enclosure of `G_mu`.
pub fn check_gap_hypothesis<T: Real>(
    params: &ModelParams<T>,
    table: &ShellTable<T>,
    e_p: T,
    rbar: &RBarBound<T>,
    tol: T,
) -> Result<BoundReport<T>> {
    let g = g_mu(params, table, -params.mu - e_p, tol)?;
    let lhs = rbar.r_bar;
    let rhs = g.lower();
    Ok(BoundReport {
        lhs,
        rhs,
        holds: lhs < rhs,
        slack: rhs - lhs,
        uncertainty: T::lit(0.5) * g.width(),
    })
}

/// Root `lambda - E_0` of the perturbed polaron equation; refuses when the
/// gap hypothesis fails.
pub fn solve_perturbed_polaron<T: Real>(
    params: &ModelParams<T>,
    table: &ShellTable<T>,
    rbar: &RBarBound<T>,
    e_p: T,
    tol: T,
) -> Result<PerturbedSolution<T>> {
    let gap = check_gap_hypothesis(params, table, e_p, rbar, tol)?;
    if !gap.holds {
        return Err(Error::Hypothesis(format!(
            "r_bar = {} is not below G_mu(-mu - e_P) >= {}",
            gap.lhs, gap.rhs
        )));
    }
    PolaronContext::new(params, table, tol)?.solve_perturbed(rbar, e_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DEFAULT_MEMORY_BUDGET;
    use std::f64::consts::{E, TAU};

    fn setup(l: f64, mu: f64) -> (ModelParams<f64>, ShellTable<f64>) {
        let p = ModelParams::new(l, -1.0, mu).unwrap();
        let n_max = ((4.0 * mu + 4.0) / p.unit() + 400.0) as u64;
        (p, ShellTable::enumerate(p.unit(), n_max, DEFAULT_MEMORY_BUDGET).unwrap())
    }

    #[test]
    fn asymptote_and_naive() {
        let p = ModelParams::new(1.0, -1.0, E).unwrap();
        assert!((polaron_asymptote(&p).unwrap() + E).abs() < 1e-15);
        let p = ModelParams::new(1.0, -1.0, E * E).unwrap();
        assert!((polaron_asymptote(&p).unwrap() + E * E / 2.0).abs() < 1e-14);
        let p = ModelParams::new(1.0, -1.0, 1e6).unwrap();
        assert!((polaron_asymptote(&p).unwrap() + 72382.4f64).abs() < 0.05);
        assert!(polaron_asymptote(&ModelParams::new(1.0, -1.0, 0.5).unwrap()).is_err());
        assert_eq!(naive_lower_shift(&ModelParams::new(1.0, -1.0, 4.0).unwrap()), -5.0);
        assert_eq!(naive_lower_shift(&ModelParams::new(1.0, -2.0, 0.5).unwrap()), -2.5);
    }

    #[test]
    fn single_hole_reduces_to_scalar_equation() {
        // mu = 0: -e = 1 / (L^2 G_0(-e)).
        let (p, t) = setup(TAU, 0.0);
        let sol = solve_polaron(&p, &t, 1e-10).unwrap();
        let g = g_mu(&p, &t, -sol.e_p, 1e-12).unwrap().mid();
        assert!((sol.e_p + 1.0 / (p.area() * g)).abs() < 1e-9 * sol.e_p.abs());
        assert!(sol.e_p < 0.0 && sol.e_p >= -1.0);
        assert!((sol.e_p + 1.0).abs() < 1e-10);
    }

    #[test]
    fn solution_properties_small_mu() {
        let (p, t) = setup(TAU, 2.0);
        let ctx = PolaronContext::new(&p, &t, 1e-10).unwrap();
        let sol = ctx.solve().unwrap();
        assert!(sol.e_p < 0.0 && sol.e_p >= naive_lower_shift(&p));
        assert!(sol.bracket.0 <= sol.e_p && sol.e_p <= sol.bracket.1);
        assert!(sol.residual <= 1e-10 * sol.e_p.abs());
        // F is increasing through the root.
        assert!(ctx.polaron_function(sol.e_p - 1e-6).unwrap() < 0.0);
        assert!(ctx.polaron_function(sol.e_p + 1e-6).unwrap() > 0.0);
    }

    #[test]
    fn perturbed_with_zero_r_is_polaron() {
        let (p, t) = setup(TAU, 50.0);
        let mut ctx = PolaronContext::new(&p, &t, 1e-10).unwrap();
        let sol = ctx.solve().unwrap();
        let pert = ctx.solve_perturbed(&RBarBound::zero(), sol.e_p).unwrap();
        assert_eq!(pert.lambda_shift, sol.e_p);
        let rb = r_bar(&p, &t, sol.e_p, 1e-12).unwrap();
        assert!(rb.r_bar > 0.0);
        assert!((rb.r_bar.powi(2) - 4.0 * rb.eta_norm_sq * rb.a_norm_sq_bound).abs() < 1e-14);
        let pert = ctx.solve_perturbed(&rb, sol.e_p).unwrap();
        assert!(pert.lambda_shift < sol.e_p);
    }

    #[test]
    fn r_bar_shrinks_with_binding() {
        let (p, t) = setup(TAU, 20.0);
        let r1 = r_bar(&p, &t, -1.0, 1e-12).unwrap().r_bar;
        let r2 = r_bar(&p, &t, -10.0, 1e-12).unwrap().r_bar;
        let r3 = r_bar(&p, &t, -1e4, 1e-12).unwrap().r_bar;
        assert!(r1 > r2 && r2 > r3 && r3 < 0.05);
    }
}
