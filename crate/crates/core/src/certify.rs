//! Per-point enclosures of the ground-state shift `E(mu) - E_0(mu)` and
//! parameter sweeps over them.
//!
//! The upper end is the polaron energy `e_P`. The lower end is the root of
//! the perturbed polaron equation when the gap hypothesis
//! `r_bar < G_mu(-mu - e_P)` holds, and the naive `E_B - mu` otherwise.
//! The exact shift comes from the one-body spectrum.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{build_shell_table, count_fermions, fermi_sea_energy, ShellCache};
use crate::params::ModelParams;
use crate::polaron::{check_gap_hypothesis, naive_lower_shift, r_bar, PolaronContext};
use crate::regsums::suggested_cutoff;
use crate::scalar::Real;
use crate::spectrum::one_body_spectrum;

/// Solver tolerances and shared state for [`enclose`].
#[derive(Debug, Clone)]
pub struct EncloseOptions<T> {
    /// Relative tolerance for lattice sums.
    pub sum_tol: T,
    /// Relative tolerance for the polaron roots.
    pub root_tol: T,
    pub cache: Option<Arc<ShellCache<T>>>,
    /// Shifts the exact value past the upper bound before the sandwich check.
    /// Only for exercising the failure path.
    pub inject_sandwich_fault: bool,
}

impl<T: Real> EncloseOptions<T> {
    pub fn new(sum_tol: T, root_tol: T) -> Result<Self> {
        if !(sum_tol > T::zero()) || !(root_tol > T::zero()) {
            return Err(Error::InvalidParams(format!(
                "tolerances must be positive, got sum_tol = {sum_tol}, root_tol = {root_tol}"
            )));
        }
        Ok(Self {
            sum_tol,
            root_tol,
            cache: None,
            inject_sandwich_fault: false,
        })
    }

    pub fn with_cache(mut self, cache: Arc<ShellCache<T>>) -> Self {
        self.cache = Some(cache);
        self
    }
}

/// Certified ordering `lower_shift <= exact_shift <= upper_shift` at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Enclosure<T> {
    pub params: ModelParams<T>,
    /// `N(mu)`.
    pub n_fermions: u64,
    /// `E_0(mu)`.
    pub e_free: T,
    /// `lambda(mu) - E_0(mu)` when feasible, `E_B - mu` otherwise.
    pub lower_shift: T,
    pub exact_shift: T,
    /// `e_P`.
    pub upper_shift: T,
    /// The gap hypothesis held and the perturbed equation was solved.
    pub feasible: bool,
    pub naive_lower: T,
    pub r_bar: T,
    /// `G_mu(-mu - e_P) - r_bar` (lower enclosure of `G_mu`).
    pub gap_slack: T,
    /// Absolute numeric uncertainty of the three shifts combined.
    pub tolerance: T,
    /// `|exact - e_P| sqrt(log mu~) / |e_P|`, for `mu~ > e`.
    pub theorem_ratio: Option<T>,
    /// `|e_P log(mu~) / mu + 1| log(mu~) / log log(mu~)`, for `mu~ > e`.
    pub polaron_ratio: Option<T>,
    pub diagnostics: Diagnostics<T>,
}

/// Solver internals kept for inspection; not part of the certified result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics<T> {
    pub polaron_bracket: (T, T),
    pub polaron_residual: T,
    pub polaron_evaluations: usize,
    pub perturbed_bracket: Option<(T, T)>,
    pub perturbed_residual: Option<T>,
    /// Error bound on `exact_shift` from the secular roots.
    pub shift_error: T,
    /// Number of secular roots solved.
    pub gap_roots: usize,
    /// `|E_0| / |exact_shift|`.
    pub cancellation: T,
    pub interlacing_ok: bool,
}

impl<T: Real> Enclosure<T> {
    /// `exact - lower`.
    pub fn lower_margin(&self) -> T {
        self.exact_shift - self.lower_shift
    }

    /// `upper - exact`.
    pub fn upper_margin(&self) -> T {
        self.upper_shift - self.exact_shift
    }

    /// Both margins exceed `factor` times the combined tolerance.
    pub fn margins_exceed(&self, factor: T) -> bool {
        let t = factor * self.tolerance;
        self.lower_margin() > t && self.upper_margin() > t
    }
}

fn ratios<T: Real>(params: &ModelParams<T>, exact: T, e_p: T) -> (Option<T>, Option<T>) {
    if !(params.mu_tilde > T::E()) {
        return (None, None);
    }
    let log = params.mu_tilde.ln();
    let loglog = log.ln();
    let theorem = (exact - e_p).abs() * log.sqrt() / e_p.abs();
    let polaron = (e_p * log / params.mu + T::one()).abs() * log / loglog;
    (Some(theorem), Some(polaron))
}

/// Builds the enclosure at one parameter point. Errors carry the name of the failing stage.
pub fn enclose<T: Real>(params: &ModelParams<T>, opts: &EncloseOptions<T>) -> Result<Enclosure<T>> {
    let params = ModelParams::new(params.l, params.e_b, params.mu).map_err(|e| e.at("params"))?;
    let cutoff = suggested_cutoff(params.mu + params.binding(), params.unit());
    let table = build_shell_table(&params, cutoff, opts.cache.as_deref()).map_err(|e| e.at("lattice"))?;
    let table = &*table;
    let n_fermions = count_fermions(table, params.mu).map_err(|e| e.at("lattice"))?;
    let e_free = fermi_sea_energy(table, params.mu).map_err(|e| e.at("lattice"))?;

    let mut ctx = PolaronContext::new(&params, table, opts.root_tol).map_err(|e| e.at("polaron"))?;
    let pol = ctx.solve().map_err(|e| e.at("polaron"))?;
    let e_p = pol.e_p;

    let naive = naive_lower_shift(&params);
    let rb = r_bar(&params, table, e_p, opts.sum_tol).map_err(|e| e.at("r_bar"))?;
    let gap = check_gap_hypothesis(&params, table, e_p, &rb, opts.sum_tol).map_err(|e| e.at("gap hypothesis"))?;
    let pert = if gap.holds {
        Some(ctx.solve_perturbed(&rb, e_p).map_err(|e| e.at("perturbed polaron"))?)
    } else {
        None
    };
    let (lower, lower_err, feasible) = match &pert {
        Some(p) => (p.lambda_shift, p.residual, true),
        None => (naive, T::zero(), false),
    };

    let spec = one_body_spectrum(&params, table, opts.sum_tol).map_err(|e| e.at("spectrum"))?;
    let mut exact = spec.shift_total;
    if opts.inject_sandwich_fault {
        exact = e_p + e_p.abs().max(T::one());
    }

    // F and the perturbed function both have slope >= 1, so a residual bounds the root error.
    let tolerance = pol.residual + lower_err + spec.shift_error;
    let (theorem_ratio, polaron_ratio) = ratios(&params, exact, e_p);
    let enc = Enclosure {
        params,
        n_fermions,
        e_free,
        lower_shift: lower,
        exact_shift: exact,
        upper_shift: e_p,
        feasible,
        naive_lower: naive,
        r_bar: rb.r_bar,
        gap_slack: gap.slack,
        tolerance,
        theorem_ratio,
        polaron_ratio,
        diagnostics: Diagnostics {
            polaron_bracket: pol.bracket,
            polaron_residual: pol.residual,
            polaron_evaluations: pol.evaluations,
            perturbed_bracket: pert.map(|p| p.bracket),
            perturbed_residual: pert.map(|p| p.residual),
            shift_error: spec.shift_error,
            gap_roots: spec.gap_roots.len(),
            cancellation: spec.cancellation,
            interlacing_ok: spec.interlacing_ok,
        },
    };
    if enc.lower_margin() < -tolerance || enc.upper_margin() < -tolerance {
        return Err(Error::Certification(format!(
            "sandwich broken at mu = {}: lower {} exact {} upper {} (tolerance {})",
            params.mu, lower, exact, e_p, tolerance
        ))
        .at("sandwich"));
    }
    Ok(enc)
}

/// Runs [`enclose`] over `grid` on up to `parallelism` threads. Output order
/// follows the grid; failures are kept per point.
pub fn sweep<T: Real>(
    grid: &[ModelParams<T>],
    opts: &EncloseOptions<T>,
    parallelism: usize,
) -> Result<Vec<Result<Enclosure<T>>>> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("empty parameter grid".into()));
    }
    if parallelism == 0 {
        return Err(Error::InvalidParams("parallelism must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    Ok(pool.install(|| grid.par_iter().map(|p| enclose(p, opts)).collect()))
}

/// Empirical envelope constants `(max theorem_ratio, max polaron_ratio)`.
pub fn fit_constants<T: Real>(encs: &[Enclosure<T>]) -> Result<(T, T)> {
    let feasible = encs.iter().filter(|e| e.feasible).count();
    if feasible < 3 {
        return Err(Error::InsufficientData(format!(
            "{feasible} feasible enclosures, need at least 3"
        )));
    }
    let fold = |f: fn(&Enclosure<T>) -> Option<T>| {
        encs.iter().filter_map(f).fold(None, |m: Option<T>, v| Some(m.map_or(v, |m| m.max(v))))
    };
    let c_theorem = fold(|e| e.theorem_ratio);
    let c_polaron = fold(|e| e.polaron_ratio);
    match (c_theorem, c_polaron) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::InsufficientData("no point with mu~ > e".into())),
    }
}

/// `n` points `mu~ = lo, ..., hi` spaced evenly in `log mu~`, at fixed `L~`.
pub fn geometric_grid<T: Real>(lo: T, hi: T, n: usize, l_tilde: T) -> Result<Vec<ModelParams<T>>> {
    if n == 0 || !(lo > T::zero()) || !(hi >= lo) {
        return Err(Error::InvalidParams(format!("bad geometric range {lo}..{hi} with {n} points")));
    }
    (0..n)
        .map(|i| {
            let t = if n == 1 {
                T::zero()
            } else {
                T::count(i as u64) / T::count(n as u64 - 1)
            };
            let mu = lo * (hi / lo).powf(t);
            let mu = if i == 0 { lo } else if i + 1 == n { hi } else { mu };
            ModelParams::dimensionless(mu, l_tilde)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn opts() -> EncloseOptions<f64> {
        EncloseOptions::new(1e-10, 1e-10).unwrap()
    }

    #[test]
    fn sandwich_at_moderate_density() {
        let p = ModelParams::new(TAU, -1.0, 1e3).unwrap();
        let e = enclose(&p, &opts()).unwrap();
        assert!(e.feasible);
        assert!(e.lower_shift < e.exact_shift && e.exact_shift < e.upper_shift);
        assert!(e.margins_exceed(10.0));
        assert!(e.theorem_ratio.is_some() && e.polaron_ratio.is_some());
    }

    #[test]
    fn single_particle() {
        let p = ModelParams::new(TAU, -1.0, 0.0).unwrap();
        let e = enclose(&p, &opts()).unwrap();
        assert_eq!(e.n_fermions, 1);
        assert_eq!(e.exact_shift, -1.0);
        assert!(e.lower_shift <= e.exact_shift + e.tolerance);
        assert!(e.exact_shift <= e.upper_shift + e.tolerance);
        assert!(e.theorem_ratio.is_none());
    }

    #[test]
    fn injected_fault_is_reported() {
        let p = ModelParams::new(TAU, -1.0, 20.0).unwrap();
        let mut o = opts();
        o.inject_sandwich_fault = true;
        let err = enclose(&p, &o).unwrap_err();
        assert!(matches!(err.root(), Error::Certification(_)), "{err}");
    }

    #[test]
    fn sweep_keeps_order_and_errors() {
        let mut grid = geometric_grid(10.0, 100.0, 3, TAU).unwrap();
        grid.insert(1, ModelParams { e_b: 1.0, ..grid[0] });
        let out = sweep(&grid, &opts(), 2).unwrap();
        assert_eq!(out.len(), 4);
        assert!(matches!(out[1].as_ref().unwrap_err().root(), Error::InvalidParams(_)));
        for (r, p) in out.iter().zip(&grid).filter(|(r, _)| r.is_ok()) {
            assert_eq!(r.as_ref().unwrap().params.mu, p.mu);
        }
        let single = sweep(&grid[..1], &opts(), 1).unwrap();
        assert_eq!(single[0], enclose(&grid[0], &opts()));
        assert!(sweep::<f64>(&[], &opts(), 1).is_err());
    }

    #[test]
    fn constants_are_maxima() {
        let p = ModelParams::new(TAU, -1.0, 1e3).unwrap();
        let e = enclose(&p, &opts()).unwrap();
        let encs = vec![e.clone(), e.clone(), e.clone()];
        let (a, b) = fit_constants(&encs).unwrap();
        assert_eq!(Some(a), e.theorem_ratio);
        assert_eq!(Some(b), e.polaron_ratio);
        assert!(matches!(fit_constants(&encs[..2]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn grid_endpoints() {
        let g = geometric_grid(1e2, 1e6, 9, TAU).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0].mu_tilde, 1e2);
        assert_eq!(g[8].mu_tilde, 1e6);
        assert!((g[1].mu_tilde - 10f64.powf(2.5)).abs() < 1e-9);
    }
}
