//! `polaron`: command-line front end for the lattice polaron solvers.
//!
//! Exit codes: 0 success, 1 certification or verification failure, 2 usage
//! error or invalid parameters, 3 numeric or resource failure.

mod commands;
mod config;
mod records;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polaron_core::Error;

use config::{Axis, Format, GridSection, Overrides, PointSection};

/// Process outcome with its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const CERTIFICATION: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const NUMERIC: u8 = 3;

    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: Self::USAGE,
            message: msg.into(),
        }
    }

    pub fn verification(msg: impl Into<String>) -> Self {
        Self {
            code: Self::CERTIFICATION,
            message: msg.into(),
        }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self {
            code: Self::NUMERIC,
            message: msg.into(),
        }
    }
}

/// Exit code for a solver error.
pub fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Certification(_) | Error::Hypothesis(_) => Failure::CERTIFICATION,
        Error::InvalidParams(_) | Error::Domain(_) => Failure::USAGE,
        _ => Failure::NUMERIC,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

/// Combined exit code over many per-point codes: certification beats
/// numeric beats usage.
pub fn worst_code(codes: impl IntoIterator<Item = u8>) -> u8 {
    let mut seen = [false; 4];
    for c in codes {
        seen[c.min(3) as usize] = true;
    }
    if seen[1] {
        1
    } else if seen[3] {
        3
    } else if seen[2] {
        2
    } else {
        0
    }
}

#[derive(Parser, Debug)]
#[command(name = "polaron", version, about = "Lattice Fermi polaron: shells, sums, polaron energies and certified enclosures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump the shell table (level, energy, multiplicity) up to a cutoff energy.
    Shells(ShellsArgs),
    /// Evaluate G_mu(tau) with its enclosure and the log-law check.
    Gmu(GmuArgs),
    /// Solve the polaron and perturbed polaron equations at one point.
    Polaron(PointCmd),
    /// One-body spectrum and exact ground-state shift at one point.
    Spectrum(PointCmd),
    /// Certified enclosure of the ground-state shift at each point.
    #[command(alias = "enclosure")]
    Solve(SolveArgs),
    /// Enclosures over a grid, followed by the fitted envelope constants.
    Sweep(SolveArgs),
    /// Run the inequality suites and report pass/fail counts.
    Verify(VerifyArgs),
    /// Inspect or clear the on-disk shell-table cache.
    Cache(CacheArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct PointArgs {
    /// Box side L (physical units).
    #[arg(long = "L")]
    l: Option<f64>,
    /// Binding energy E_B < 0 (physical units, default -1).
    #[arg(long = "E-B", allow_negative_numbers = true)]
    e_b: Option<f64>,
    /// Fermi energy mu (physical units).
    #[arg(long)]
    mu: Option<f64>,
    /// Dimensionless mu / |E_B|; implies E_B = -1.
    #[arg(long = "mu-tilde")]
    mu_tilde: Option<f64>,
    /// Dimensionless L sqrt|E_B|; implies E_B = -1.
    #[arg(long = "L-tilde")]
    l_tilde: Option<f64>,
}

impl PointArgs {
    fn section(&self) -> PointSection {
        PointSection {
            l: self.l,
            e_b: self.e_b,
            mu: self.mu,
            mu_tilde: self.mu_tilde,
            l_tilde: self.l_tilde,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
struct GridArgs {
    /// mu~ values: `FROM:TO:N` (geometric) or a comma-separated list.
    #[arg(long = "grid-mu-tilde", id = "grid_mu_tilde", value_parser = Axis::parse)]
    mu_tilde: Option<Axis>,
    /// L~ values, same syntax.
    #[arg(long = "grid-L-tilde", id = "grid_l_tilde", value_parser = Axis::parse)]
    l_tilde: Option<Axis>,
    /// E_B values, same syntax; mu = mu~ |E_B| and L = L~ / sqrt|E_B|.
    #[arg(long = "grid-E-B", id = "grid_e_b", value_parser = Axis::parse, allow_hyphen_values = true)]
    e_b: Option<Axis>,
}

#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Relative tolerance for lattice sums.
    #[arg(long = "sum-tol")]
    sum_tol: Option<f64>,
    /// Relative tolerance for roots.
    #[arg(long = "root-tol")]
    root_tol: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write records here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Shell-table cache directory (overrides POLARON_CACHE_DIR).
    #[arg(long = "cache-dir")]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ShellsArgs {
    #[arg(long = "L")]
    l: Option<f64>,
    /// Largest shell energy k^2 to list.
    #[arg(long)]
    cutoff: f64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct GmuArgs {
    #[command(flatten)]
    point: PointArgs,
    /// Argument tau (physical units).
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    /// Argument tau / |E_B|.
    #[arg(long = "tau-tilde", allow_negative_numbers = true)]
    tau_tilde: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct PointCmd {
    #[command(flatten)]
    point: PointArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Fault {
    Sandwich,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    point: PointArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    common: CommonArgs,
    /// Worker threads for the sweep.
    #[arg(long)]
    parallel: Option<usize>,
    /// Refuse grids with more points than this.
    #[arg(long = "max-points")]
    max_points: Option<usize>,
    #[arg(long = "inject-fault", value_enum, hide = true)]
    inject_fault: Option<Fault>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    /// f(t) = exp(-t)
    Exp,
    /// f(t) = (1+t)^-2
    Pow2,
    /// f(t) = (1+t)^-3/2
    Pow32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    LogLaw,
    Riemann,
    Interlacing,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suites to run (default: all).
    #[arg(long, value_enum, value_delimiter = ',')]
    suite: Vec<Suite>,
    /// Test functions for the Riemann checks (default: all).
    #[arg(long, value_enum, value_delimiter = ',')]
    family: Vec<Family>,
    /// mu~ values for the log-law and interlacing grids.
    #[arg(long = "grid-mu-tilde", value_parser = Axis::parse)]
    mu_tilde: Option<Axis>,
    /// L~ values for the log-law and interlacing grids.
    #[arg(long = "grid-L-tilde", value_parser = Axis::parse)]
    l_tilde: Option<Axis>,
    /// Box sides for the Riemann checks.
    #[arg(long = "grid-L", value_parser = Axis::parse)]
    l: Option<Axis>,
    /// Thresholds m for the restricted Riemann check.
    #[arg(long = "grid-m", value_parser = Axis::parse)]
    m: Option<Axis>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Subcommand, Debug, Clone)]
enum CacheOp {
    /// List cached tables.
    Inspect(CommonArgs),
    /// Delete cached tables.
    Clear(CommonArgs),
}

#[derive(Args, Debug)]
struct CacheArgs {
    #[command(subcommand)]
    op: CacheOp,
}

fn overrides(common: &CommonArgs, point: PointSection, grid: GridSection) -> Overrides {
    Overrides {
        point,
        grid,
        sum_tol: common.sum_tol,
        root_tol: common.root_tol,
        format: common.format,
        output: common.output.clone(),
        cache_dir: common.cache_dir.clone(),
        ..Default::default()
    }
}

fn resolve(common: &CommonArgs, ov: Overrides) -> Result<config::RunConfig, Failure> {
    let file = match &common.config {
        Some(p) => config::FileConfig::load(p)?,
        None => config::FileConfig::default(),
    };
    config::RunConfig::resolve(file, ov)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Shells(a) => {
            let cfg = resolve(&a.common, overrides(&a.common, PointSection { l: a.l, ..Default::default() }, GridSection::default()))?;
            commands::shells(&cfg, a.cutoff)
        }
        Command::Gmu(a) => {
            let cfg = resolve(&a.common, overrides(&a.common, a.point.section(), GridSection::default()))?;
            commands::gmu(&cfg, a.tau, a.tau_tilde)
        }
        Command::Polaron(a) => {
            let cfg = resolve(&a.common, overrides(&a.common, a.point.section(), GridSection::default()))?;
            commands::polaron(&cfg)
        }
        Command::Spectrum(a) => {
            let cfg = resolve(&a.common, overrides(&a.common, a.point.section(), GridSection::default()))?;
            commands::spectrum(&cfg)
        }
        Command::Solve(a) => solve_like(a, false),
        Command::Sweep(a) => solve_like(a, true),
        Command::Verify(a) => {
            let grid = GridSection {
                mu_tilde: a.mu_tilde.clone(),
                l_tilde: a.l_tilde.clone(),
                ..Default::default()
            };
            let cfg = resolve(&a.common, overrides(&a.common, PointSection::default(), grid))?;
            commands::verify(
                &cfg,
                &commands::VerifyPlan {
                    suites: a.suite,
                    families: a.family,
                    l: a.l,
                    m: a.m,
                },
            )
        }
        Command::Cache(a) => {
            let (common, clear) = match &a.op {
                CacheOp::Inspect(c) => (c, false),
                CacheOp::Clear(c) => (c, true),
            };
            let cfg = resolve(common, overrides(common, PointSection::default(), GridSection::default()))?;
            commands::cache(&cfg, clear)
        }
    }
}

fn solve_like(a: SolveArgs, sweep: bool) -> Result<u8, Failure> {
    let grid = GridSection {
        mu_tilde: a.grid.mu_tilde,
        l_tilde: a.grid.l_tilde,
        e_b: a.grid.e_b,
        points: None,
    };
    let mut ov = overrides(&a.common, a.point.section(), grid);
    ov.parallelism = a.parallel;
    ov.max_points = a.max_points;
    let cfg = resolve(&a.common, ov)?;
    commands::solve(&cfg, sweep, a.inject_fault == Some(Fault::Sandwich))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_precedence() {
        assert_eq!(worst_code([]), 0);
        assert_eq!(worst_code([0, 2, 0]), 2);
        assert_eq!(worst_code([2, 3]), 3);
        assert_eq!(worst_code([3, 1, 2]), 1);
    }

    #[test]
    fn error_mapping() {
        assert_eq!(exit_code(&Error::InvalidParams("x".into())), 2);
        assert_eq!(exit_code(&Error::Certification("x".into()).at("sandwich")), 1);
        assert_eq!(exit_code(&Error::Precision("x".into()).at("polaron")), 3);
        assert_eq!(exit_code(&Error::Resource { n_max: 1, bytes: 2, budget: 1 }), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
