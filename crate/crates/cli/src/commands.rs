//! Subcommand bodies. Each returns the exit code; hard errors come back as
//! [`Failure`].

use std::f64::consts::TAU;
use std::sync::Arc;
use std::time::Instant;

use polaron_core::certify::{enclose, fit_constants};
use polaron_core::lattice::{build_shell_table, count_fermions, DEFAULT_MEMORY_BUDGET};
use polaron_core::polaron::{check_gap_hypothesis, polaron_asymptote, r_bar, PolaronContext};
use polaron_core::regsums::{g_mu, g_mu_log_law, riemann_check_a, riemann_check_b, suggested_cutoff};
use polaron_core::spectrum::one_body_spectrum;
use polaron_core::{BoundReport, EncloseOptions, Error, ModelParams, ShellCache, ShellTable};
use rayon::prelude::*;

use crate::config::{Axis, RunConfig};
use crate::records::{self, *};
use crate::units::Scaled;
use crate::{worst_code, Failure, Family, Suite};

fn cache_for(cfg: &RunConfig) -> Arc<ShellCache> {
    Arc::new(match &cfg.cache_dir {
        Some(d) => ShellCache::with_dir(d),
        None => ShellCache::in_memory(),
    })
}

fn table_for(model: &ModelParams, cache: &ShellCache) -> Result<Arc<ShellTable>, Error> {
    build_shell_table(model, suggested_cutoff(model.mu + model.binding(), model.unit()), Some(cache))
}

pub fn shells(cfg: &RunConfig, cutoff: f64) -> Result<u8, Failure> {
    if !(cutoff >= 0.0) || !cutoff.is_finite() {
        return Err(Failure::usage(format!("cutoff {cutoff} must be a non-negative number")));
    }
    // Below the first nonzero shell the table is (0, 1) whatever the box.
    let l = match cfg.point.l {
        Some(l) => l,
        None if cutoff == 0.0 => TAU,
        None => return Err(Failure::usage("missing --L")),
    };
    let params = ModelParams::new(l, -1.0, 0.0)?;
    let table = match &cfg.cache_dir {
        Some(_) => build_shell_table(&params, cutoff, Some(&cache_for(cfg)))?,
        None => build_shell_table(&params, cutoff, None)?,
    };
    let rows: Vec<ShellRow> = (0..table.len())
        .map(|j| ShellRow {
            n: table.levels()[j],
            energy: table.energy(j),
            multiplicity: table.multiplicities()[j],
        })
        .collect();
    records::emit(cfg.format, cfg.output.as_deref(), &rows, || &rows)?;
    Ok(0)
}

pub fn gmu(cfg: &RunConfig, tau: Option<f64>, tau_tilde: Option<f64>) -> Result<u8, Failure> {
    let s = Scaled::new(cfg.single_point()?)?;
    let tau_t = match (tau, tau_tilde) {
        (Some(_), Some(_)) => return Err(Failure::usage("give either --tau or --tau-tilde, not both")),
        (Some(t), None) => s.to_model(t),
        (None, Some(t)) => t,
        (None, None) => return Err(Failure::usage("missing --tau")),
    };
    let cache = cache_for(cfg);
    let table = table_for(&s.model, &cache)?;
    let g = g_mu(&s.model, &table, tau_t, cfg.sum_tol)?;
    let law = if tau_t > -s.model.mu {
        Some(g_mu_log_law(&s.model, &table, tau_t, cfg.sum_tol)?)
    } else {
        None
    };
    let p = s.physical;
    let row = GmuRow {
        l: p.l,
        e_b: p.e_b,
        mu: p.mu,
        tau: s.energy(tau_t),
        g: g.mid(),
        g_lower: g.lower(),
        g_upper: g.upper(),
        log_law_lhs: law.map(|r| r.lhs),
        log_law_rhs: law.map(|r| r.rhs),
        log_law_holds: law.map(|r| r.holds),
    };
    records::emit(cfg.format, cfg.output.as_deref(), std::slice::from_ref(&row), || &row)?;
    Ok(0)
}

pub fn polaron(cfg: &RunConfig) -> Result<u8, Failure> {
    let s = Scaled::new(cfg.single_point()?)?;
    let cache = cache_for(cfg);
    let table = table_for(&s.model, &cache)?;
    let m = &s.model;
    let mut ctx = PolaronContext::new(m, &table, cfg.root_tol)?;
    let sol = ctx.solve()?;
    let rb = r_bar(m, &table, sol.e_p, cfg.sum_tol)?;
    let gap = check_gap_hypothesis(m, &table, sol.e_p, &rb, cfg.sum_tol)?;
    let pert = if gap.holds {
        Some(ctx.solve_perturbed(&rb, sol.e_p)?)
    } else {
        None
    };
    let p = s.physical;
    let row = PolaronRow {
        l: p.l,
        e_b: p.e_b,
        mu: p.mu,
        mu_tilde: p.mu_tilde,
        n: count_fermions(&table, m.mu)?,
        e_p: s.energy(sol.e_p),
        e_p_residual: s.energy(sol.residual),
        e_p_lo: s.energy(sol.bracket.0),
        e_p_hi: s.energy(sol.bracket.1),
        asymptote: polaron_asymptote(m).ok().map(|a| s.energy(a)),
        r_bar: rb.r_bar,
        gap_slack: gap.slack,
        feasible: gap.holds,
        lambda_shift: pert.map(|x| s.energy(x.lambda_shift)),
        lambda_residual: pert.map(|x| s.energy(x.residual)),
    };
    records::emit(cfg.format, cfg.output.as_deref(), std::slice::from_ref(&row), || &row)?;
    Ok(0)
}

pub fn spectrum(cfg: &RunConfig) -> Result<u8, Failure> {
    let s = Scaled::new(cfg.single_point()?)?;
    let cache = cache_for(cfg);
    let table = table_for(&s.model, &cache)?;
    let spec = one_body_spectrum(&s.model, &table, cfg.sum_tol)?;
    let rows: Vec<EigenRow> = spec
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(index, &(v, m))| EigenRow {
            index,
            eigenvalue: s.energy(v),
            multiplicity: m,
        })
        .collect();
    eprintln!(
        "spectrum: N = {}, shift = {} +- {}, interlacing {}",
        spec.n_used,
        s.energy(spec.shift_total),
        s.energy(spec.shift_error),
        if spec.interlacing_ok { "ok" } else { "VIOLATED" }
    );
    let p = s.physical;
    records::emit(cfg.format, cfg.output.as_deref(), &rows, || SpectrumDoc {
        schema: SPECTRUM_SCHEMA,
        l: p.l,
        e_b: p.e_b,
        mu: p.mu,
        n: spec.n_used,
        e_total: s.energy(spec.e_total),
        e_free: s.energy(spec.e_free),
        shift_total: s.energy(spec.shift_total),
        shift_error: s.energy(spec.shift_error),
        naive_shift: s.energy(spec.naive_shift),
        cancellation: spec.cancellation,
        interlacing_ok: spec.interlacing_ok,
        eigenvalues: rows.clone(),
        gap_roots: spec.gap_roots.iter().map(|&z| s.energy(z)).collect(),
    })?;
    Ok(if spec.interlacing_ok { 0 } else { Failure::CERTIFICATION })
}

pub fn solve(cfg: &RunConfig, sweep: bool, inject_fault: bool) -> Result<u8, Failure> {
    let points = cfg.grid_points()?;
    let scaled: Vec<Result<Scaled, Error>> = points.iter().map(|&p| Scaled::new(p)).collect();
    let mut opts = EncloseOptions::new(cfg.sum_tol, cfg.root_tol)?.with_cache(cache_for(cfg));
    opts.inject_sandwich_fault = inject_fault;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Failure::io(format!("thread pool: {e}")))?;
    let total = points.len();
    let results: Vec<Result<polaron_core::Enclosure, Error>> = pool.install(|| {
        scaled
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let t0 = Instant::now();
                let p = points[i];
                let res = s.clone().and_then(|s| enclose(&s.model, &opts));
                match &res {
                    Ok(e) => eprintln!(
                        "[{}/{total}] L={} E_B={} mu={}: ok{} ({:.2?})",
                        i + 1,
                        p.l,
                        p.e_b,
                        p.mu,
                        if e.feasible { "" } else { " (infeasible, naive lower bound)" },
                        t0.elapsed()
                    ),
                    Err(e) => eprintln!("[{}/{total}] L={} E_B={} mu={}: error: {e}", i + 1, p.l, p.e_b, p.mu),
                }
                res
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(total);
    let mut recs = Vec::with_capacity(total);
    let mut physical = Vec::new();
    for ((p, s), res) in points.iter().zip(&scaled).zip(&results) {
        let rec = enclosure_record(p.l, p.e_b, p.mu, s.as_ref().ok(), res);
        rows.push(EnclosureRow::new(p.l, p.e_b, p.mu, rec.enclosure.as_ref()));
        if let Some(e) = &rec.enclosure {
            physical.push(e.clone());
        }
        recs.push(rec);
    }
    let constants = if sweep {
        match fit_constants(&physical) {
            Ok((c_theorem, c_polaron)) => {
                eprintln!("envelope constants: C_theorem = {c_theorem}, C_polaron = {c_polaron}");
                Some(Constants { c_theorem, c_polaron })
            }
            Err(e) => {
                eprintln!("envelope constants unavailable: {e}");
                None
            }
        }
    } else {
        None
    };
    records::emit(cfg.format, cfg.output.as_deref(), &rows, || EnclosureDoc {
        schema: ENCLOSURE_SCHEMA,
        records: recs,
        constants,
    })?;
    Ok(worst_code(results.iter().map(|r| r.as_ref().err().map_or(0, crate::exit_code))))
}

pub struct VerifyPlan {
    pub suites: Vec<Suite>,
    pub families: Vec<Family>,
    pub l: Option<Axis>,
    pub m: Option<Axis>,
}

fn family_fn(f: Family) -> (&'static str, fn(f64) -> f64) {
    match f {
        Family::Exp => ("exp(-t)", |t| (-t).exp()),
        Family::Pow2 => ("(1+t)^-2", |t| (1.0 + t).powi(-2)),
        Family::Pow32 => ("(1+t)^-3/2", |t| (1.0 + t).powf(-1.5)),
    }
}

fn axis_or(a: Option<&Axis>, default: &[f64], name: &str) -> Result<Vec<f64>, Failure> {
    let v = match a {
        Some(a) => a.values()?,
        None => default.to_vec(),
    };
    if v.is_empty() {
        return Err(Failure::usage(format!("the {name} grid is empty")));
    }
    Ok(v)
}

fn report_row(suite: &'static str, case: String, r: Result<BoundReport, Error>) -> (VerifyRow, Option<u8>) {
    match r {
        Ok(r) => (
            VerifyRow {
                suite,
                case,
                lhs: Some(r.lhs),
                rhs: Some(r.rhs),
                slack: Some(r.slack),
                uncertainty: Some(r.uncertainty),
                holds: Some(r.holds),
                error: None,
            },
            None,
        ),
        Err(e) => (error_row(suite, case, &e), Some(crate::exit_code(&e))),
    }
}

fn error_row(suite: &'static str, case: String, e: &Error) -> VerifyRow {
    VerifyRow {
        suite,
        case,
        lhs: None,
        rhs: None,
        slack: None,
        uncertainty: None,
        holds: None,
        error: Some(e.to_string()),
    }
}

pub fn verify(cfg: &RunConfig, plan: &VerifyPlan) -> Result<u8, Failure> {
    let all = [Suite::LogLaw, Suite::Riemann, Suite::Interlacing];
    let suites: Vec<Suite> = if plan.suites.is_empty() { all.to_vec() } else { plan.suites.clone() };
    let families = if plan.families.is_empty() {
        vec![Family::Exp, Family::Pow2, Family::Pow32]
    } else {
        plan.families.clone()
    };
    let mus = axis_or(cfg.grid.mu_tilde.as_ref(), &[10.0, 1e3, 1e5], "mu~")?;
    let lts = axis_or(cfg.grid.l_tilde.as_ref(), &[1.0, 3.0, 10.0], "L~")?;
    let ls = axis_or(plan.l.as_ref(), &[1.0, TAU, 20.0], "L")?;
    let ms = axis_or(plan.m.as_ref(), &[1.0, 5.0], "m")?;
    let cache = cache_for(cfg);

    let mut rows = Vec::new();
    let mut codes = Vec::new();
    let mut push = |row: VerifyRow, err: Option<u8>| {
        match (err, row.holds) {
            (Some(c), _) => codes.push(c),
            (None, Some(false)) => codes.push(Failure::CERTIFICATION),
            _ => {}
        }
        eprintln!(
            "verify {} {}: {}",
            row.suite,
            row.case,
            match (&row.error, row.holds) {
                (Some(e), _) => format!("error: {e}"),
                (None, Some(true)) => "holds".into(),
                _ => "FAILS".into(),
            }
        );
        rows.push(row);
    };

    for suite in suites {
        match suite {
            Suite::LogLaw => {
                for &lt in &lts {
                    for &mt in &mus {
                        let model = ModelParams::dimensionless(mt, lt);
                        let table = model.and_then(|m| table_for(&m, &cache).map(|t| (m, t)));
                        for tau in [-mt / 2.0, 0.0, 1.0, mt] {
                            let case = format!("L~={lt} mu~={mt} tau~={tau}");
                            let r = table
                                .clone()
                                .and_then(|(m, t)| g_mu_log_law(&m, &t, tau, cfg.sum_tol));
                            let (row, err) = report_row("log-law", case, r);
                            push(row, err);
                        }
                    }
                }
            }
            Suite::Riemann => {
                for &f in &families {
                    let (name, func) = family_fn(f);
                    for &l in &ls {
                        let r = riemann_check_a(&func, l, cfg.sum_tol);
                        let (row, err) = report_row("riemann-a", format!("f={name} L={l}"), r);
                        push(row, err);
                        for &m in &ms {
                            let r = riemann_check_b(&func, m, l, cfg.sum_tol);
                            let (row, err) = report_row("riemann-b", format!("f={name} L={l} m={m}"), r);
                            push(row, err);
                        }
                    }
                }
            }
            Suite::Interlacing => {
                for &lt in &lts {
                    for &mt in &mus {
                        let case = format!("L~={lt} mu~={mt}");
                        let r = ModelParams::dimensionless(mt, lt).and_then(|m| {
                            let t = table_for(&m, &cache)?;
                            one_body_spectrum(&m, &t, cfg.sum_tol)
                        });
                        let (row, err) = match r {
                            Ok(spec) => (
                                VerifyRow {
                                    suite: "interlacing",
                                    case,
                                    lhs: None,
                                    rhs: None,
                                    slack: None,
                                    uncertainty: None,
                                    holds: Some(spec.interlacing_ok),
                                    error: None,
                                },
                                None,
                            ),
                            Err(e) => (error_row("interlacing", case, &e), Some(crate::exit_code(&e))),
                        };
                        push(row, err);
                        cache.clear_memory();
                    }
                }
            }
        }
    }
    drop(push);

    let passed = rows.iter().filter(|r| r.holds == Some(true)).count();
    let failed = rows.iter().filter(|r| r.holds == Some(false)).count();
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("verify: {passed} passed, {failed} failed, {errors} errors");
    records::emit(cfg.format, cfg.output.as_deref(), &rows, || VerifyDoc {
        schema: VERIFY_SCHEMA,
        passed,
        failed,
        errors,
        records: rows.clone(),
    })?;
    Ok(worst_code(codes))
}

pub fn cache(cfg: &RunConfig, clear: bool) -> Result<u8, Failure> {
    let dir = cfg
        .cache_dir
        .as_ref()
        .ok_or_else(|| Failure::usage("no cache directory: pass --cache-dir or set POLARON_CACHE_DIR"))?;
    let cache = ShellCache::with_dir(dir).with_budget(DEFAULT_MEMORY_BUDGET);
    if clear {
        let n = cache.clear_disk()?;
        eprintln!("removed {n} cached tables from {}", dir.display());
        return Ok(0);
    }
    #[derive(serde::Serialize)]
    struct Entry {
        file: String,
        bytes: u64,
    }
    let rows: Vec<Entry> = cache
        .disk_entries()?
        .into_iter()
        .map(|p| Entry {
            bytes: std::fs::metadata(&p).map(|m| m.len()).unwrap_or(0),
            file: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        })
        .collect();
    records::emit(cfg.format, cfg.output.as_deref(), &rows, || &rows)?;
    Ok(0)
}
