//! One-body spectrum of the point-scatterer operator, the exact ground-state
//! shift it implies, and the hole-sector matrix of the trial state.
//!
//! Off the free spectrum the eigenvalues are the zeros of the secular sum
//! `S(z) = (1/L^2) sum_k [1/(k^2 - E_B) - 1/(k^2 - z)]`: one below zero
//! (`E_B` itself) and one in each gap between consecutive shells. Every shell
//! of multiplicity `m` keeps `m - 1` eigenvalues at its own energy.
//!
//! All gap roots below the Fermi level are needed at once, so `S` is
//! evaluated through a field precomputed on the integer level grid. With
//! `z = u (c + d)` for a gap centre `c`, levels within `D` of `c` are summed
//! directly, levels further out enter through the Taylor moments
//! `M_p(c) = sum_{|n - c| > D} r2(n) / (n - c)^(p+1)`, which are correlations
//! of `r2` with fixed kernels and come out of one FFT per pair of kernels,
//! and levels above a far cutoff enter through a Chebyshev fit in `z` of
//! their (smooth) contribution.

use std::borrow::Cow;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::Chebyshev;
use crate::lattice::{ShellTable, DEFAULT_MEMORY_BUDGET};
use crate::params::ModelParams;
use crate::polaron::PolaronContext;
use crate::regsums::{occupied_shells, theta_sums, with_growing_table};
use crate::roots::increasing_root;
use crate::scalar::Real;
use crate::sum::Accumulator;

const MIN_WINDOW: u64 = 16;
/// Direct window as a multiple of the widest half-gap; bounds the Taylor ratio by 1/6.
const WINDOW_PER_GAP: f64 = 6.0;
/// Target size of the first omitted Taylor term relative to the moment sum.
const TAYLOR_TARGET: f64 = 1e-18;
const TAIL_NODES: [usize; 3] = [32, 48, 64];
const LEBESGUE: f64 = 3.3;
/// Constant in the FFT convolution error bound `C eps log2(n) |m|_2 |K|_1`.
const FFT_ERROR_C: f64 = 3.0;
/// Gaps whose root is located to this relative width stop bisecting.
const ROOT_REL: f64 = 1e-13;

/// Eigenvalues of the one-body operator up to the first gap above the Fermi shell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumResult<T> {
    /// Distinct eigenvalues with multiplicity, ascending. Holds `N(mu) + 1`
    /// eigenvalues counted with multiplicity: the last is the gap root above
    /// the Fermi shell.
    pub eigenvalues: Vec<(T, u32)>,
    /// Zeros `zeta_j` of the secular sum in `(s_j, s_{j+1})`, through the gap above the Fermi shell.
    pub gap_roots: Vec<T>,
    /// `N(mu)`.
    pub n_used: u64,
    /// `E(mu)`, the sum of the lowest `N(mu)` eigenvalues.
    pub e_total: T,
    /// `E_0(mu)`.
    pub e_free: T,
    /// `E(mu) - E_0(mu)` summed as paired differences `zeta_j - s_{j+1}`.
    pub shift_total: T,
    /// Bound on the error of `shift_total` from the root locations.
    pub shift_error: T,
    /// `e_total - e_free`, kept for comparison only.
    pub naive_shift: T,
    /// `|E_0| / |shift|`, the cancellation factor of the naive difference.
    pub cancellation: T,
    pub interlacing_ok: bool,
}

struct Gap {
    lo: u64,
    hi: u64,
    centre: u64,
    m_lo: f64,
    m_hi: f64,
}

/// Precomputed `-u L^2 S(u (c + d))` around each gap centre `c`.
struct SecularField {
    unit: f64,
    window: u64,
    n_far: u64,
    counts: Vec<f64>,
    /// `u sum_{n <= n_far} r2(n) / (u n + a)` and its rounding bound.
    u_const: f64,
    u_const_err: f64,
    terms: usize,
    moments: Vec<f64>,
    moment_err: Vec<f64>,
    abs_moments: Vec<f64>,
    abs_err: f64,
    tail: Option<(Chebyshev<f64>, f64)>,
}

impl SecularField {
    fn build<T: Real>(
        table: &ShellTable<T>,
        a: f64,
        gaps: &[Gap],
        n_far: u64,
        with_tail: bool,
    ) -> Result<Self> {
        let unit = table.unit().to_f64_lossy();
        let eps = f64::EPSILON;
        let h_max = gaps
            .iter()
            .map(|g| (g.centre - g.lo).max(g.hi - g.centre))
            .max()
            .unwrap_or(1);
        let window = MIN_WINDOW.max((WINDOW_PER_GAP * h_max as f64).ceil() as u64);
        let rho = h_max as f64 / (window + 1) as f64;
        let terms = (TAYLOR_TARGET.ln() / rho.ln()).ceil().max(2.0) as usize;
        let n_top = gaps.last().map_or(0, |g| g.hi);
        if n_far < n_top {
            return Err(Error::OutOfRange {
                requested: n_top as f64 * unit,
                cutoff: n_far as f64 * unit,
            });
        }

        let mut counts = vec![0.0; n_far as usize + 1];
        let mut u_acc = Accumulator::new();
        for (&n, &m) in table.levels().iter().zip(table.multiplicities()) {
            if n > n_far {
                break;
            }
            counts[n as usize] = m as f64;
            u_acc.add(unit * m as f64 / (unit * n as f64 + a));
        }
        let m_norm = counts.iter().map(|m| m * m).sum::<f64>().sqrt();

        // Moments for every centre at once: M(c) = sum_n m(n) K(n - c) is the
        // convolution of m with the reflected kernel.
        let need = n_far as usize + n_top as usize + 1;
        let len = fft_len(need);
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let mut scratch = vec![Complex::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
        let mut mhat: Vec<Complex<f64>> = (0..len)
            .map(|i| Complex::new(if i <= n_far as usize { counts[i] } else { 0.0 }, 0.0))
            .collect();
        fwd.process_with_scratch(&mut mhat, &mut scratch);

        let log_len = (len as f64).log2();
        // Kernels are scaled by (D+1)^(p+1) so that both halves of a packed
        // pair have entries of size at most one; otherwise the roundoff of the
        // larger half swamps the smaller one.
        let w1 = (window + 1) as f64;
        let kernel = |p: usize, k: i64| -> f64 {
            if p == terms {
                w1 / (k.unsigned_abs() as f64)
            } else {
                (w1 / k as f64).powi(p as i32 + 1)
            }
        };
        let unscale = |p: usize| -> f64 {
            if p == terms {
                1.0 / w1
            } else {
                w1.powi(-(p as i32 + 1))
            }
        };
        let n_centres = gaps.len();
        let mut moments = vec![0.0; n_centres * terms];
        let mut abs_moments = vec![0.0; n_centres];
        let mut moment_err = vec![0.0; terms];
        let mut abs_err = 0.0;
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        let kernels: Vec<usize> = std::iter::once(terms).chain(0..terms).collect();
        for pair in kernels.chunks(2) {
            buf.iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
            let mut l1 = 0.0;
            // Reflected kernel Kf(j) = K(-j) for j in [-n_far, n_top], |j| > window.
            for j in -(n_far as i64)..=(n_top as i64) {
                if j.unsigned_abs() <= window {
                    continue;
                }
                let idx = j.rem_euclid(len as i64) as usize;
                let re = kernel(pair[0], -j);
                let im = pair.get(1).map_or(0.0, |&p| kernel(p, -j));
                l1 += re.abs().max(im.abs());
                buf[idx] = Complex::new(re, im);
            }
            fwd.process_with_scratch(&mut buf, &mut scratch);
            for (b, m) in buf.iter_mut().zip(&mhat) {
                *b *= m;
            }
            inv.process_with_scratch(&mut buf, &mut scratch);
            let scale = 1.0 / len as f64;
            for (slot, &p) in pair.iter().enumerate() {
                let back = unscale(p);
                let err = FFT_ERROR_C * eps * log_len * m_norm * l1 * back;
                for (g, gap) in gaps.iter().enumerate() {
                    let v = buf[gap.centre as usize] * scale;
                    let v = if slot == 0 { v.re } else { v.im } * back;
                    if p == terms {
                        abs_moments[g] = v;
                    } else {
                        moments[g * terms + p] = v;
                    }
                }
                if p == terms {
                    abs_err = err;
                } else {
                    moment_err[p] = err;
                }
            }
        }
        drop(buf);
        drop(mhat);

        let tail = if with_tail {
            Some(Self::fit_tail(table, a, n_far, n_top as f64 * unit)?)
        } else {
            None
        };
        Ok(Self {
            unit,
            window,
            n_far,
            counts,
            u_const: u_acc.value(),
            u_const_err: u_acc.rounding_allowance(),
            terms,
            moments,
            moment_err,
            abs_moments,
            abs_err,
            tail,
        })
    }

    /// Chebyshev fit over `z in [0, z_hi]` of `sum_{n > n_far} r2(n) [1/(u n + a) - 1/(u n - z)]`.
    fn fit_tail<T: Real>(table: &ShellTable<T>, a: f64, n_far: u64, z_hi: f64) -> Result<(Chebyshev<f64>, f64)> {
        let tol = 1e-14 * (1.0 + z_hi / table.unit().to_f64_lossy()).ln().max(1.0);
        for &nodes in &TAIL_NODES {
            let zs = Chebyshev::nodes(0.0, z_hi, nodes);
            let bs: Vec<T> = zs.iter().map(|&z| T::lit(-z)).collect();
            let sums = with_growing_table(table, |t| {
                let skip = t.shells_through(n_far);
                theta_sums(t, skip, T::lit(a), &bs, T::lit(tol), false)
            })?;
            let values: Vec<f64> = sums.iter().map(|s| s.r.to_f64_lossy()).collect();
            let node_err = sums.iter().map(|s| s.r_err.to_f64_lossy()).fold(0.0, f64::max);
            let cheb = Chebyshev::fit(0.0, z_hi, &values);
            let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let tail = cheb.tail_estimate();
            if tail <= 1e-15 * scale + 4.0 * node_err {
                return Ok((cheb, LEBESGUE * node_err + 2.0 * tail + 64.0 * f64::EPSILON * scale));
            }
        }
        Err(Error::Precision("far-shell contribution to the secular sum is not resolved by its Chebyshev fit".into()))
    }

    /// `f(d) = -u L^2 S(u (c + d))`, increasing in `d`, with `f'` and an error bound.
    fn eval(&self, g: usize, centre: u64, d: f64) -> (f64, f64, f64) {
        let eps = f64::EPSILON;
        let lo = centre.saturating_sub(self.window);
        let hi = (centre + self.window).min(self.n_far);
        let mut near = Accumulator::new();
        let mut near_d = 0.0;
        for n in lo..=hi {
            let m = self.counts[n as usize];
            if m == 0.0 {
                continue;
            }
            let r = 1.0 / ((n as f64 - centre as f64) - d);
            near.add(m * r);
            near_d += m * r * r;
        }
        let mom = &self.moments[g * self.terms..(g + 1) * self.terms];
        let mut taylor = 0.0;
        let mut taylor_d = 0.0;
        let mut taylor_err = 0.0;
        for p in (0..self.terms).rev() {
            taylor = taylor * d + mom[p];
            if p > 0 {
                taylor_d = taylor_d * d + p as f64 * mom[p];
            }
            taylor_err = taylor_err * d.abs() + self.moment_err[p];
        }
        let ratio = d.abs() / (self.window + 1) as f64;
        let remainder = ratio.powi(self.terms as i32) / (1.0 - ratio) * (self.abs_moments[g] + self.abs_err);
        let z = self.unit * (centre as f64 + d);
        let (tail, tail_d, tail_err) = match &self.tail {
            Some((cheb, err)) => (cheb.eval(z), cheb.eval_deriv(z), *err),
            None => (0.0, 0.0, 0.0),
        };
        let u = self.unit;
        let f = near.value() + taylor - self.u_const - u * tail;
        let df = near_d + taylor_d - u * u * tail_d;
        let mag = near.magnitude() + taylor.abs() + self.u_const + u * tail.abs();
        let err = taylor_err + remainder + self.u_const_err + u * tail_err + 8.0 * eps * mag;
        (f, df, err)
    }

    /// Root `d` of the gap's field in `(gap.lo - c, gap.hi - c)` and a bound on its error.
    fn gap_root(&self, g: usize, gap: &Gap) -> Result<(f64, f64)> {
        let c = gap.centre as f64;
        let pole_lo = gap.lo as f64 - c;
        let pole_hi = gap.hi as f64 - c;
        let (mut lo, mut hi) = (pole_lo, pole_hi);
        let mut x = 0.5 * (lo + hi);
        let min_width = ROOT_REL * (c + x).abs().max(1.0);
        let mut last = self.eval(g, gap.centre, x);
        for iter in 0..200 {
            let (f, df, err) = last;
            if f.abs() <= err || hi - lo <= min_width {
                break;
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - f / df;
            x = if iter % 4 != 3 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            last = self.eval(g, gap.centre, x);
        }
        let (f, df, _) = last;
        let polished = x - f / df;
        if polished > lo && polished < hi {
            let cand = self.eval(g, gap.centre, polished);
            if cand.0.abs() <= f.abs() {
                x = polished;
                last = cand;
            }
        }
        let (f, _, err) = last;
        // f' is bounded below on the final bracket by the two adjacent shells alone.
        let slope = gap.m_lo / (hi - pole_lo).powi(2) + gap.m_hi / (pole_hi - lo).powi(2);
        let dx = (f.abs() + err) / slope;
        if !(x > pole_lo && x < pole_hi) || dx > 0.5 * (pole_hi - pole_lo) {
            return Err(Error::Precision(format!(
                "secular root in ({}, {}) not resolved: |S| = {} with error {}",
                gap.lo, gap.hi, f.abs(), err
            )));
        }
        Ok((x, dx))
    }
}

/// Smallest length `2^k` or `3 * 2^k` that is at least `n`.
fn fft_len(n: usize) -> usize {
    let p = n.next_power_of_two();
    if p / 4 * 3 >= n {
        p / 4 * 3
    } else {
        p
    }
}

fn gaps_through<T: Real>(table: &ShellTable<T>, last: usize) -> Vec<Gap> {
    let levels = table.levels();
    let mult = table.multiplicities();
    (0..=last)
        .map(|j| {
            let lo = levels[j];
            let hi = levels[j + 1];
            Gap {
                lo,
                hi,
                centre: (lo + hi) / 2,
                m_lo: mult[j] as f64,
                m_hi: mult[j + 1] as f64,
            }
        })
        .collect()
}

/// Table reaching at least `n_max` levels, borrowed when the given one does.
fn reach<T: Real>(table: &ShellTable<T>, n_max: u64) -> Result<Cow<'_, ShellTable<T>>> {
    if table.n_max() >= n_max {
        Ok(Cow::Borrowed(table))
    } else {
        Ok(Cow::Owned(ShellTable::enumerate(table.unit(), n_max, DEFAULT_MEMORY_BUDGET)?))
    }
}

/// Zeros `zeta_j / u - c_j` of the secular sum in the gaps `0..=last`, in level units,
/// with error bounds. `n_cut` truncates the sum to levels `<= n_cut`.
fn solve_gaps<T: Real>(table: &ShellTable<T>, a: f64, last: usize, n_cut: Option<u64>) -> Result<(Vec<Gap>, Vec<(f64, f64)>)> {
    let n_top = table.levels()[last + 1];
    let gaps = gaps_through(table, last);
    let h_max = gaps.iter().map(|g| (g.centre - g.lo).max(g.hi - g.centre)).max().unwrap_or(1);
    let window = MIN_WINDOW.max((WINDOW_PER_GAP * h_max as f64).ceil() as u64);
    let n_far = match n_cut {
        Some(n) => n,
        None => (n_top + n_top * 2 / 5).max(n_top + window) + window + 64,
    };
    let table = reach(table, n_far + 1)?;
    let field = SecularField::build(&table, a, &gaps, n_far, n_cut.is_none())?;
    let roots = gaps
        .iter()
        .enumerate()
        .map(|(g, gap)| field.gap_root(g, gap))
        .collect::<Result<Vec<_>>>()?;
    Ok((gaps, roots))
}

/// Spectrum of the one-body operator through the Fermi level of `params`.
pub fn one_body_spectrum<T: Real>(params: &ModelParams<T>, table: &ShellTable<T>, tol: T) -> Result<SpectrumResult<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidParams(format!("tolerance {tol} must be positive")));
    }
    let j1 = occupied_shells(table, params.mu)?;
    let a = params.binding().to_f64_lossy();
    let (gaps, roots) = solve_gaps(table, a, j1 - 1, None)?;
    assemble(params, table, j1, &gaps, &roots)
}

fn assemble<T: Real>(
    params: &ModelParams<T>,
    table: &ShellTable<T>,
    j1: usize,
    gaps: &[Gap],
    roots: &[(f64, f64)],
) -> Result<SpectrumResult<T>> {
    let u = table.unit();
    let mult = table.multiplicities();
    let gap_roots: Vec<T> = gaps
        .iter()
        .zip(roots)
        .map(|(gap, &(d, _))| u * T::lit(gap.centre as f64 + d))
        .collect();
    let mut eigenvalues = Vec::with_capacity(2 * j1 + 2);
    eigenvalues.push((params.e_b, 1u32));
    for (j, &z) in gap_roots.iter().enumerate() {
        if mult[j] > 1 {
            eigenvalues.push((table.energy(j), mult[j] - 1));
        }
        eigenvalues.push((z, 1));
    }

    // Paired differences zeta_j - s_{j+1} for the gaps below the Fermi shell.
    let mut shift = Accumulator::new();
    shift.add(params.e_b);
    let mut shift_err = T::zero();
    for (gap, &(d, dx)) in gaps.iter().zip(roots).take(j1 - 1) {
        let offset = gap.centre as f64 - gap.hi as f64;
        shift.add(u * (T::lit(offset) + T::lit(d)));
        shift_err = shift_err + u * T::lit(dx);
    }
    let shift_total = shift.value();
    let shift_error = shift_err + shift.rounding_allowance();

    let n_used: u64 = mult[..j1].iter().map(|&m| m as u64).sum();
    let mut free = Accumulator::new();
    for j in 0..j1 {
        free.add(T::count(mult[j] as u64) * table.energy(j));
    }
    let mut total = Accumulator::new();
    let mut left = n_used;
    for &(v, m) in &eigenvalues {
        if left == 0 {
            break;
        }
        let take = left.min(m as u64);
        total.add(T::count(take) * v);
        left -= take;
    }
    let e_free = free.value();
    let e_total = total.value();
    let naive_shift = e_total - e_free;
    let cancellation = if shift_total != T::zero() {
        e_free.abs() / shift_total.abs()
    } else {
        T::zero()
    };
    let interlacing_ok = interlaces(table, j1, &eigenvalues);
    Ok(SpectrumResult {
        eigenvalues,
        gap_roots,
        n_used,
        e_total,
        e_free,
        shift_total,
        shift_error,
        naive_shift,
        cancellation,
        interlacing_ok,
    })
}

/// `lambda0_i <= lambda_{i+1}` for `i = 1..=N`, both sides counted with multiplicity.
fn interlaces<T: Real>(table: &ShellTable<T>, j1: usize, eigenvalues: &[(T, u32)]) -> bool {
    let free = (0..j1).map(|j| (table.energy(j), table.multiplicities()[j]));
    let mut pert = eigenvalues.iter().flat_map(|&(v, m)| std::iter::repeat(v).take(m as usize)).skip(1);
    for (s, m) in free {
        for _ in 0..m {
            match pert.next() {
                Some(v) if s <= v => {}
                _ => return false,
            }
        }
    }
    true
}

/// `E(mu) - E_0(mu)`.
pub fn exact_shift<T: Real>(params: &ModelParams<T>, table: &ShellTable<T>, tol: T) -> Result<T> {
    one_body_spectrum(params, table, tol).map(|s| s.shift_total)
}

/// Eigenvalues of the operator truncated to momenta with `k^2 <= u n_cut`,
/// from the truncated secular sum, as `(value, multiplicity)` ascending.
///
/// This is the rank-one operator `-Delta - g eta eta^T` on the truncated space,
/// with `g` fixed so that `E_B` stays an eigenvalue.
pub fn truncated_spectrum<T: Real>(params: &ModelParams<T>, table: &ShellTable<T>, n_cut: u64) -> Result<Vec<(T, u32)>> {
    let table = reach(table, n_cut)?;
    let last_shell = table.shells_through(n_cut);
    if last_shell < 2 {
        return Err(Error::InvalidParams(format!("cutoff {n_cut} leaves fewer than two shells")));
    }
    let a = params.binding().to_f64_lossy();
    let (gaps, roots) = solve_gaps(&table, a, last_shell - 2, Some(n_cut))?;
    let u = table.unit();
    let mult = table.multiplicities();
    let mut out = vec![(params.e_b, 1u32)];
    for (j, (gap, &(d, _))) in gaps.iter().zip(&roots).enumerate() {
        if mult[j] > 1 {
            out.push((table.energy(j), mult[j] - 1));
        }
        out.push((u * T::lit(gap.centre as f64 + d), 1));
    }
    let j = last_shell - 1;
    if mult[j] > 1 {
        out.push((table.energy(j), mult[j] - 1));
    }
    Ok(out)
}

/// The hole-sector matrix `diag(d) - w 1 1^T` of the trial state at shift `lambda'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorMatrix<T> {
    /// Occupied shells `(s, m)`.
    pub holes: Vec<(T, u32)>,
    /// `G_mu(-s - lambda')` per shell.
    pub diag: Vec<T>,
    /// `1 / (L^2 (-lambda'))`.
    pub rank_one_weight: T,
    /// Error bound on each diagonal entry.
    pub diag_error: T,
}

impl<T: Real> SectorMatrix<T> {
    pub fn new(ctx: &mut PolaronContext<'_, T>, lambda_shift: T) -> Result<Self> {
        if !(lambda_shift < T::zero()) {
            return Err(Error::Domain(format!("lambda' = {lambda_shift} must be negative")));
        }
        ctx.extend_to(-lambda_shift)?;
        let holes: Vec<(T, u32)> = ctx
            .occupied()
            .iter()
            .map(|&(s, m)| (s, m.to_u32().unwrap_or(u32::MAX)))
            .collect();
        let diag = holes
            .iter()
            .map(|&(s, _)| ctx.g(-s - lambda_shift))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            holes,
            diag,
            rank_one_weight: T::one() / (ctx.params().area() * (-lambda_shift)),
            diag_error: ctx.g_error(),
        })
    }

    /// `N(mu)`.
    pub fn dimension(&self) -> u64 {
        self.holes.iter().map(|h| h.1 as u64).sum()
    }

    pub fn max_abs_diag(&self) -> T {
        self.diag.iter().fold(T::zero(), |m, d| m.max(d.abs()))
    }

    /// Smallest root `x < min d` of `1 - w sum_q m_q / (d_q - x)`.
    ///
    /// Shell-internal eigenvectors orthogonal to the constant vector sit at
    /// `d_q` itself and are never below this root.
    pub fn lowest_eigenvalue(&self, tol: T) -> Result<T> {
        let d_min = self.diag.iter().copied().fold(T::infinity(), T::min);
        let w = self.rank_one_weight;
        let n = T::count(self.dimension());
        // In y = d_min - x the secular function increases from -inf at y = 0.
        let phi = |y: T| -> Result<T> {
            let acc: Accumulator<T> = self
                .diag
                .iter()
                .zip(&self.holes)
                .map(|(&d, h)| T::count(h.1 as u64) / (d - d_min + y))
                .collect();
            Ok(T::one() - w * acc.value())
        };
        let hi = w * n;
        let f_hi = phi(hi)?;
        if f_hi == T::zero() {
            return Ok(d_min - hi);
        }
        let mut lo = hi;
        let mut f_lo = f_hi;
        for _ in 0..2000 {
            lo = lo * T::lit(0.5);
            f_lo = phi(lo)?;
            if f_lo < T::zero() {
                break;
            }
        }
        if !(f_lo < T::zero()) {
            return Err(Error::Numeric("sector secular function has no sign change".into()));
        }
        let root = increasing_root(phi, lo, hi, f_lo, Some(f_hi), T::epsilon(), T::zero())?;
        let scale = self.max_abs_diag();
        if root.x <= tol * scale {
            return Err(Error::Precision(format!(
                "lowest sector eigenvalue lies within {} of the diagonal entry {d_min}",
                root.x
            )));
        }
        Ok(d_min - root.x)
    }
}

/// Lowest eigenvalue of the hole-sector matrix at `lambda' = lambda_shift`.
pub fn chevy_sector_lowest<T: Real>(params: &ModelParams<T>, table: &ShellTable<T>, lambda_shift: T, tol: T) -> Result<T> {
    let mut ctx = PolaronContext::new(params, table, tol)?;
    SectorMatrix::new(&mut ctx, lambda_shift)?.lowest_eigenvalue(tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polaron::solve_polaron;
    use crate::regsums::secular_sum;
    use std::f64::consts::TAU;

    fn setup(l: f64, mu: f64) -> (ModelParams<f64>, ShellTable<f64>) {
        let p = ModelParams::new(l, -1.0, mu).unwrap();
        let n_max = ((4.0 * mu + 4.0) / p.unit() + 400.0) as u64;
        (p, ShellTable::enumerate(p.unit(), n_max, DEFAULT_MEMORY_BUDGET).unwrap())
    }

    #[test]
    fn fft_lengths() {
        assert_eq!(fft_len(5), 6);
        assert_eq!(fft_len(7), 8);
        assert_eq!(fft_len(1000), 1024);
        assert_eq!(fft_len(700), 768);
    }

    #[test]
    fn gap_roots_are_zeros_of_the_secular_sum() {
        let (p, t) = setup(TAU, 30.0);
        let spec = one_body_spectrum(&p, &t, 1e-10).unwrap();
        let roots = &spec.gap_roots;
        assert_eq!(roots.len(), t.shells_through(30));
        for (j, &z) in roots.iter().enumerate() {
            assert!(z > t.energy(j) && z < t.energy(j + 1));
            let s = secular_sum(&p, &t, z, 1e-12).unwrap();
            let dz = s.s.mid().abs() / s.ds.mid().abs();
            assert!(dz < 1e-11 * z, "gap {j}: z = {z}, dz = {dz}");
        }
    }

    #[test]
    fn structure_and_counting() {
        let (p, t) = setup(TAU, 2.0);
        let spec = one_body_spectrum(&p, &t, 1e-10).unwrap();
        assert_eq!(spec.eigenvalues[0], (-1.0, 1));
        assert!(spec.eigenvalues[1..].iter().all(|e| e.0 > 0.0));
        let total: u64 = spec.eigenvalues.iter().map(|e| e.1 as u64).sum();
        assert_eq!(spec.n_used, 9);
        assert_eq!(total, spec.n_used + 1);
        assert!(spec.interlacing_ok);
        assert!(spec.shift_total >= -3.0 && spec.shift_total < 0.0);
        let e_p = solve_polaron(&p, &t, 1e-10).unwrap().e_p;
        assert!(spec.shift_total <= e_p);
        assert!((spec.naive_shift - spec.shift_total).abs() < 1e-12 * spec.e_free.abs());
    }

    #[test]
    fn single_particle_shift_is_binding_energy() {
        let (p, t) = setup(TAU, 0.0);
        let spec = one_body_spectrum(&p, &t, 1e-10).unwrap();
        assert_eq!(spec.n_used, 1);
        assert_eq!(spec.shift_total, -1.0);
        assert!(spec.interlacing_ok);
    }

    #[test]
    fn shift_is_independent_of_table_size() {
        let (p, t) = setup(TAU, 200.0);
        let big = ShellTable::enumerate(t.unit(), t.n_max() * 2, DEFAULT_MEMORY_BUDGET).unwrap();
        let a = exact_shift(&p, &t, 1e-10).unwrap();
        let b = exact_shift(&p, &big, 1e-10).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs(), "{a} {b}");
    }

    #[test]
    fn sector_zero_at_polaron_energy() {
        let (p, t) = setup(TAU, 10.0);
        let mut ctx = PolaronContext::new(&p, &t, 1e-10).unwrap();
        let e_p = ctx.solve().unwrap().e_p;
        let m = SectorMatrix::new(&mut ctx, e_p).unwrap();
        let x = m.lowest_eigenvalue(1e-10).unwrap();
        assert!(x.abs() <= 1e-8 * m.max_abs_diag(), "{x}");
        let below = SectorMatrix::new(&mut ctx, e_p * 1.01).unwrap().lowest_eigenvalue(1e-10).unwrap();
        let above = SectorMatrix::new(&mut ctx, e_p * 0.99).unwrap().lowest_eigenvalue(1e-10).unwrap();
        assert!(below > 0.0 && above < 0.0, "{below} {above}");
    }

    #[test]
    fn sector_one_by_one() {
        let (p, t) = setup(TAU, 0.0);
        let e_p = solve_polaron(&p, &t, 1e-10).unwrap().e_p;
        let x = chevy_sector_lowest(&p, &t, e_p * 0.5, 1e-10).unwrap();
        let g = crate::regsums::g_mu(&p, &t, -e_p * 0.5, 1e-12).unwrap().mid();
        let expect = g - 1.0 / (p.area() * (-e_p * 0.5));
        assert!((x - expect).abs() < 1e-10, "{x} {expect}");
    }

    #[test]
    fn field_matches_direct_secular_sum() {
        let mu = 3000.0;
        let (p, t) = setup(TAU, mu);
        let j1 = occupied_shells(&t, mu).unwrap();
        let gaps = gaps_through(&t, j1 - 1);
        let widest = (0..gaps.len())
            .max_by_key(|&g| gaps[g].hi - gaps[g].lo)
            .unwrap();
        let n_top = gaps.last().unwrap().hi;
        let field = SecularField::build(&t, 1.0, &gaps, n_top * 2, true).unwrap();
        for g in [0, 7, widest, gaps.len() - 1] {
            let gap = &gaps[g];
            let (lo, hi) = (gap.lo as f64 - gap.centre as f64, gap.hi as f64 - gap.centre as f64);
            for k in 1..8 {
                let d = lo + (hi - lo) * k as f64 / 8.0;
                let (f, _, err) = field.eval(g, gap.centre, d);
                let z = gap.centre as f64 + d;
                let direct = -p.area() * secular_sum(&p, &t, z, 1e-12).unwrap().s.mid();
                assert!((f - direct).abs() <= err + 1e-12 * direct.abs().max(1.0), "gap {g} d {d}: {f} vs {direct}");
                assert!((f - direct).abs() < 1e-10, "gap {g} d {d}: {f} vs {direct}");
            }
        }
    }
}
