//! Run configuration: an optional TOML file, overridden by flags.
//!
//! ```toml
//! [point]
//! L = 6.283185307179586
//! E_B = -1.0
//! mu = 100.0
//!
//! [grid]
//! mu_tilde = { from = 1e2, to = 1e6, points = 9 }
//! L_tilde = [6.283185307179586]
//! E_B = [-1.0]
//! points = [[6.283185307179586, -1.0, 10.0]]
//!
//! [tolerances]
//! sum_tol = 1e-10
//! root_tol = 1e-10
//!
//! [output]
//! format = "csv"
//! path = "out.csv"
//!
//! [run]
//! parallelism = 4
//! cache_dir = "/tmp/polaron-cache"
//! max_points = 10000
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::Failure;

pub const CACHE_ENV: &str = "POLARON_CACHE_DIR";
pub const DEFAULT_MAX_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A physical parameter point `(L, E_B, mu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub l: f64,
    pub e_b: f64,
    pub mu: f64,
}

/// Values along one grid axis.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    List(Vec<f64>),
    Geometric { from: f64, to: f64, points: usize },
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>, Failure> {
        match self {
            Axis::List(v) => Ok(v.clone()),
            Axis::Geometric { from, to, points } => {
                if *points == 0 {
                    return Ok(Vec::new());
                }
                if !(*from > 0.0) || !(*to > 0.0) {
                    return Err(Failure::usage(format!("geometric range {from}..{to} must be positive")));
                }
                Ok((0..*points)
                    .map(|i| {
                        if i == 0 {
                            *from
                        } else if i + 1 == *points {
                            *to
                        } else {
                            let t = i as f64 / (*points - 1) as f64;
                            from * (to / from).powf(t)
                        }
                    })
                    .collect())
            }
        }
    }

    /// `FROM:TO:N` for a geometric range, otherwise a comma-separated list.
    pub fn parse(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(format!("expected FROM:TO:N, got {s:?}"));
            }
            let points = parts[2].trim().parse::<usize>().map_err(|e| format!("{:?}: {e}", parts[2]))?;
            Ok(Axis::Geometric {
                from: num(parts[0])?,
                to: num(parts[1])?,
                points,
            })
        } else if s.trim().is_empty() {
            Ok(Axis::List(Vec::new()))
        } else {
            s.split(',').map(num).collect::<Result<Vec<_>, _>>().map(Axis::List)
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub point: PointSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub tolerances: TolSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSection {
    #[serde(rename = "L")]
    pub l: Option<f64>,
    #[serde(rename = "E_B")]
    pub e_b: Option<f64>,
    pub mu: Option<f64>,
    pub mu_tilde: Option<f64>,
    #[serde(rename = "L_tilde")]
    pub l_tilde: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub mu_tilde: Option<Axis>,
    #[serde(rename = "L_tilde")]
    pub l_tilde: Option<Axis>,
    #[serde(rename = "E_B")]
    pub e_b: Option<Axis>,
    pub points: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolSection {
    pub sum_tol: Option<f64>,
    pub root_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub format: Option<Format>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub parallelism: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub max_points: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub point: PointSection,
    pub grid: GridSection,
    pub sum_tol: f64,
    pub root_tol: f64,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub parallelism: usize,
    pub cache_dir: Option<PathBuf>,
    pub max_points: usize,
}

/// Flag values that override the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub point: PointSection,
    pub grid: GridSection,
    pub sum_tol: Option<f64>,
    pub root_tol: Option<f64>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub max_points: Option<usize>,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, flags: Overrides) -> Result<Self, Failure> {
        let pick = |a: Option<f64>, b: Option<f64>| a.or(b);
        let point = PointSection {
            l: pick(flags.point.l, file.point.l),
            e_b: pick(flags.point.e_b, file.point.e_b),
            mu: pick(flags.point.mu, file.point.mu),
            mu_tilde: pick(flags.point.mu_tilde, file.point.mu_tilde),
            l_tilde: pick(flags.point.l_tilde, file.point.l_tilde),
        };
        let grid = GridSection {
            mu_tilde: flags.grid.mu_tilde.or(file.grid.mu_tilde),
            l_tilde: flags.grid.l_tilde.or(file.grid.l_tilde),
            e_b: flags.grid.e_b.or(file.grid.e_b),
            points: flags.grid.points.or(file.grid.points),
        };
        let env_cache = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        let cfg = Self {
            point,
            grid,
            sum_tol: flags.sum_tol.or(file.tolerances.sum_tol).unwrap_or(1e-10),
            root_tol: flags.root_tol.or(file.tolerances.root_tol).unwrap_or(1e-10),
            format: flags.format.or(file.output.format).unwrap_or(Format::Csv),
            output: flags.output.or(file.output.path),
            parallelism: flags.parallelism.or(file.run.parallelism).unwrap_or(1),
            cache_dir: flags.cache_dir.or(env_cache).or(file.run.cache_dir),
            max_points: flags.max_points.or(file.run.max_points).unwrap_or(DEFAULT_MAX_POINTS),
        };
        if !(cfg.sum_tol > 0.0) || !(cfg.root_tol > 0.0) {
            return Err(Failure::usage("tolerances must be positive"));
        }
        if cfg.parallelism == 0 {
            return Err(Failure::usage("parallelism must be positive"));
        }
        Ok(cfg)
    }

    /// The single point given by `--L/--E-B/--mu` or `--mu-tilde/--L-tilde`.
    pub fn single_point(&self) -> Result<Point, Failure> {
        let p = &self.point;
        match (p.mu, p.mu_tilde) {
            (Some(_), Some(_)) => Err(Failure::usage("give either --mu or --mu-tilde, not both")),
            (Some(mu), None) => {
                let l = p.l.ok_or_else(|| Failure::usage("missing --L"))?;
                Ok(Point {
                    l,
                    e_b: p.e_b.unwrap_or(-1.0),
                    mu,
                })
            }
            (None, Some(mt)) => {
                let lt = p.l_tilde.or(p.l).ok_or_else(|| Failure::usage("missing --L-tilde"))?;
                Ok(Point { l: lt, e_b: -1.0, mu: mt })
            }
            (None, None) => Err(Failure::usage("missing --mu or --mu-tilde")),
        }
    }

    /// Grid points: explicit points first, then the product of the axes. Falls
    /// back to the single point when no grid is configured.
    pub fn grid_points(&self) -> Result<Vec<Point>, Failure> {
        let g = &self.grid;
        let mut out: Vec<Point> = g
            .points
            .iter()
            .flatten()
            .map(|&[l, e_b, mu]| Point { l, e_b, mu })
            .collect();
        let has_axes = g.mu_tilde.is_some() || g.l_tilde.is_some() || g.e_b.is_some();
        if has_axes {
            let mus = g
                .mu_tilde
                .as_ref()
                .ok_or_else(|| Failure::usage("grid needs mu_tilde values"))?
                .values()?;
            let lts = match &g.l_tilde {
                Some(a) => a.values()?,
                None => vec![self.point.l_tilde.or(self.point.l).unwrap_or(std::f64::consts::TAU)],
            };
            let ebs = match &g.e_b {
                Some(a) => a.values()?,
                None => vec![self.point.e_b.unwrap_or(-1.0)],
            };
            let total = mus.len().saturating_mul(lts.len()).saturating_mul(ebs.len());
            if total > self.max_points {
                return Err(Failure::usage(format!("grid has {total} points, over the limit of {}", self.max_points)));
            }
            for &e_b in &ebs {
                let scale = e_b.abs();
                for &lt in &lts {
                    for &mt in &mus {
                        out.push(Point {
                            l: lt / scale.sqrt(),
                            e_b,
                            mu: mt * scale,
                        });
                    }
                }
            }
            if out.is_empty() {
                return Err(Failure::usage("the parameter grid is empty"));
            }
        } else if out.is_empty() {
            out.push(self.single_point()?);
        }
        if out.len() > self.max_points {
            return Err(Failure::usage(format!("grid has {} points, over the limit of {}", out.len(), self.max_points)));
        }
        Ok(out)
    }
}
