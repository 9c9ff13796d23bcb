//! Momentum lattice `(2 pi / L) Z^2` grouped into energy shells.
//!
//! A shell is the set of lattice momenta with the same `k^2 = unit * n`,
//! where `unit = (2 pi / L)^2` and `n` is a sum of two squares. Energies are
//! kept as the integer `n`; the unit is applied at use sites so that shell
//! identity and the `k^2 <= mu` boundary test never depend on rounding.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::scalar::Real;
use crate::sum::Accumulator;

/// Magic first line of the on-disk shell cache.
pub const CACHE_MAGIC: &str = "POLARON-SHELLS v1";

/// Default memory budget for the enumeration grid, in bytes.
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

/// Distinct shells `unit * n_j` with multiplicities `m_j = r2(n_j)`, for all
/// `n_j <= n_max`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellTable<T> {
    unit: T,
    n_max: u64,
    n: Vec<u64>,
    m: Vec<u32>,
}

impl<T: Real> ShellTable<T> {
    /// Enumerates every `(a, b)` with `a^2 + b^2 <= n_max` over one closed
    /// quadrant and completes by symmetry.
    pub fn enumerate(unit: T, n_max: u64, budget: u64) -> Result<Self> {
        if !(unit > T::zero()) || !unit.is_finite() {
            return Err(Error::InvalidParams(format!("lattice unit {unit} must be positive")));
        }
        let bytes = (n_max + 1).saturating_mul(std::mem::size_of::<u32>() as u64);
        if bytes > budget {
            return Err(Error::Resource {
                n_max,
                bytes,
                budget,
            });
        }
        let mut counts = vec![0u32; (n_max + 1) as usize];
        counts[0] = 1;
        let a_max = isqrt(n_max);
        for a in 0..=a_max {
            let a2 = a * a;
            let b_max = isqrt(n_max - a2);
            if a == 0 {
                // (0, b) and (0, -b)
                for b in 1..=b_max {
                    counts[(b * b) as usize] += 2;
                }
            } else {
                // (a, 0) and (-a, 0)
                counts[a2 as usize] += 2;
                for b in 1..=b_max {
                    counts[(a2 + b * b) as usize] += 4;
                }
            }
        }
        let (n, m): (Vec<u64>, Vec<u32>) = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as u64, c))
            .unzip();
        Ok(Self { unit, n_max, n, m })
    }

    /// Assembles a table from stored `(n, m)` pairs, checking ordering.
    pub fn from_parts(unit: T, n_max: u64, n: Vec<u64>, m: Vec<u32>) -> Result<Self> {
        if n.len() != m.len() || n.first() != Some(&0) || m.first() != Some(&1) {
            return Err(Error::Cache("shell list must start with (0, 1)".into()));
        }
        if n.windows(2).any(|w| w[0] >= w[1]) || n.last().is_some_and(|&l| l > n_max) {
            return Err(Error::Cache("shell list not strictly increasing within n_max".into()));
        }
        if m.iter().skip(1).any(|&c| c == 0 || c % 4 != 0) {
            return Err(Error::Cache("non-zero shells must have multiplicity divisible by 4".into()));
        }
        Ok(Self { unit, n_max, n, m })
    }

    #[inline]
    pub fn unit(&self) -> T {
        self.unit
    }

    #[inline]
    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    /// Largest enumerated energy, `unit * n_max`.
    #[inline]
    pub fn cutoff(&self) -> T {
        self.unit * T::count(self.n_max)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// Integer shell labels `n_j`.
    #[inline]
    pub fn levels(&self) -> &[u64] {
        &self.n
    }

    /// Multiplicities `m_j`.
    #[inline]
    pub fn multiplicities(&self) -> &[u32] {
        &self.m
    }

    #[inline]
    pub fn energy(&self, j: usize) -> T {
        self.unit * T::count(self.n[j])
    }

    /// `(s_j, m_j)` in increasing energy.
    pub fn shells(&self) -> impl Iterator<Item = (T, u32)> + '_ {
        self.n
            .iter()
            .zip(&self.m)
            .map(move |(&n, &m)| (self.unit * T::count(n), m))
    }

    /// Largest integer level `n` with `unit * n <= energy`; `None` below zero.
    ///
    /// A relative slack of a few ulps makes decimal inputs that are meant to
    /// sit exactly on a shell count that shell as occupied.
    pub fn level_at_or_below(&self, energy: T) -> Option<u64> {
        if energy < T::zero() {
            return None;
        }
        let x = energy / self.unit * (T::one() + T::lit(4.0) * T::epsilon());
        x.floor().to_u64()
    }

    /// Number of shells with `n_j <= level`.
    pub fn shells_through(&self, level: u64) -> usize {
        self.n.partition_point(|&n| n <= level)
    }

    /// Index of the Fermi shell (largest `s_j <= mu`), after range checks.
    pub fn fermi_index(&self, mu: T) -> Result<usize> {
        self.check_energy(mu)?;
        let level = self.level_at_or_below(mu).unwrap_or(0);
        Ok(self.shells_through(level).max(1) - 1)
    }

    /// Every shell `<= e` is in the table. Energies short of the next
    /// integer level `unit * (n_max + 1)` qualify: no lattice point lies between.
    pub fn check_energy(&self, e: T) -> Result<()> {
        let reach = self.unit * T::count(self.n_max + 1);
        if !(e < reach * (T::one() - T::lit(4.0) * T::epsilon())) {
            return Err(Error::OutOfRange {
                requested: e.to_f64_lossy(),
                cutoff: self.cutoff().to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// Dense `r2(n)` for `n = 0..=upto`, zeros where `n` is not a sum of two squares.
    pub fn dense_counts(&self, upto: u64) -> Vec<T> {
        let upto = upto.min(self.n_max);
        let mut out = vec![T::zero(); (upto + 1) as usize];
        for (&n, &m) in self.n.iter().zip(&self.m) {
            if n > upto {
                break;
            }
            out[n as usize] = T::count(m as u64);
        }
        out
    }

    /// Writes the cache format: magic line, `unit`, `n_max`, then `n m` rows.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::Cache(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(fs::File::create(&tmp).map_err(io)?);
            writeln!(w, "{CACHE_MAGIC}").map_err(io)?;
            writeln!(w, "unit {:e}", self.unit.to_f64_lossy()).map_err(io)?;
            writeln!(w, "n_max {}", self.n_max).map_err(io)?;
            for (n, m) in self.n.iter().zip(&self.m) {
                writeln!(w, "{n} {m}").map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let io = |e: std::io::Error| Error::Cache(format!("{}: {e}", path.display()));
        let bad = |what: &str| Error::Cache(format!("{}: {what}", path.display()));
        let mut lines = BufReader::new(fs::File::open(path).map_err(io)?).lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| bad("truncated header"))?.map_err(io)
        };
        if next()?.trim() != CACHE_MAGIC {
            return Err(bad("bad magic line"));
        }
        let unit_line = next()?;
        let unit: f64 = unit_line
            .strip_prefix("unit ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad unit line"))?;
        let n_max_line = next()?;
        let n_max: u64 = n_max_line
            .strip_prefix("n_max ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad n_max line"))?;
        let mut n = Vec::new();
        let mut m = Vec::new();
        for line in lines {
            let line = line.map_err(io)?;
            let mut it = line.split_whitespace();
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad("malformed shell row"));
            };
            n.push(a.parse().map_err(|_| bad("malformed n"))?);
            m.push(b.parse().map_err(|_| bad("malformed m"))?);
        }
        Self::from_parts(T::lit(unit), n_max, n, m)
    }
}

fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Cache key: the bit pattern of the unit as `f64` plus `n_max`.
type Key = (u64, u64);

/// Process-wide shell table cache with an optional on-disk backing store.
///
/// Lookups take a read lock; construction is serialized by a separate
/// builder mutex so that a table is enumerated at most once per key.
#[derive(Debug)]
pub struct ShellCache<T> {
    dir: Option<PathBuf>,
    budget: u64,
    tables: RwLock<HashMap<Key, Arc<ShellTable<T>>>>,
    builder: Mutex<()>,
}

impl<T: Real> Default for ShellCache<T> {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl<T: Real> ShellCache<T> {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            budget: DEFAULT_MEMORY_BUDGET,
            tables: RwLock::new(HashMap::new()),
            builder: Mutex::new(()),
        }
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            ..Self::in_memory()
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn key(unit: T, n_max: u64) -> Key {
        (unit.to_f64_lossy().to_bits(), n_max)
    }

    /// File name used for `(unit, n_max)` inside the cache directory.
    pub fn file_name(unit: T, n_max: u64) -> String {
        format!("shells-{:016x}-{n_max}.txt", unit.to_f64_lossy().to_bits())
    }

    /// Any cached table for `unit` covering at least `n_max`.
    fn lookup(&self, unit: T, n_max: u64) -> Option<Arc<ShellTable<T>>> {
        let bits = unit.to_f64_lossy().to_bits();
        let tables = self.tables.read().expect("cache lock poisoned");
        tables
            .iter()
            .filter(|((b, n), _)| *b == bits && *n >= n_max)
            .min_by_key(|((_, n), _)| *n)
            .map(|(_, t)| Arc::clone(t))
    }

    /// Table for exactly `(unit, n_max)`, from memory, disk, or enumeration.
    pub fn get(&self, unit: T, n_max: u64) -> Result<Arc<ShellTable<T>>> {
        let key = Self::key(unit, n_max);
        if let Some(t) = self.tables.read().expect("cache lock poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        let _guard = self.builder.lock().expect("builder lock poisoned");
        if let Some(t) = self.tables.read().expect("cache lock poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(self.load_or_build(unit, n_max)?);
        self.tables
            .write()
            .expect("cache lock poisoned")
            .insert(key, Arc::clone(&table));
        Ok(table)
    }

    /// A table for `unit` with `n_max` at least the request; reuses larger
    /// tables already in memory.
    pub fn at_least(&self, unit: T, n_max: u64) -> Result<Arc<ShellTable<T>>> {
        match self.lookup(unit, n_max) {
            Some(t) => Ok(t),
            None => self.get(unit, n_max),
        }
    }

    fn load_or_build(&self, unit: T, n_max: u64) -> Result<ShellTable<T>> {
        if let Some(dir) = &self.dir {
            let path = dir.join(Self::file_name(unit, n_max));
            if path.exists() {
                let t = ShellTable::<T>::read_cache(&path)?;
                if t.n_max == n_max && t.unit.to_f64_lossy().to_bits() == unit.to_f64_lossy().to_bits() {
                    return Ok(t);
                }
            }
            let t = ShellTable::enumerate(unit, n_max, self.budget)?;
            t.write_cache(&path)?;
            return Ok(t);
        }
        ShellTable::enumerate(unit, n_max, self.budget)
    }

    /// Drops every in-memory table.
    pub fn clear_memory(&self) {
        self.tables.write().expect("cache lock poisoned").clear();
    }

    /// Cache files present on disk.
    pub fn disk_entries(&self) -> Result<Vec<PathBuf>> {
        let Some(dir) = &self.dir else { return Ok(Vec::new()) };
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::Cache(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("shells-") && n.ends_with(".txt"))
            })
            .collect();
        out.sort();
        Ok(out)
    }

    /// Removes all cache files from disk and memory; returns how many files went.
    pub fn clear_disk(&self) -> Result<usize> {
        let entries = self.disk_entries()?;
        for p in &entries {
            fs::remove_file(p).map_err(|e| Error::Cache(format!("{}: {e}", p.display())))?;
        }
        self.clear_memory();
        Ok(entries.len())
    }
}

/// Builds all shells with `s_j <= cutoff` for the box of `params`.
pub fn build_shell_table<T: Real>(
    params: &ModelParams<T>,
    cutoff: T,
    cache: Option<&ShellCache<T>>,
) -> Result<Arc<ShellTable<T>>> {
    if !(cutoff >= T::zero()) {
        return Err(Error::Domain(format!("cutoff {cutoff} must be non-negative")));
    }
    let unit = params.unit();
    let n_max = (cutoff / unit * (T::one() + T::lit(4.0) * T::epsilon()))
        .floor()
        .to_u64()
        .ok_or_else(|| Error::Domain(format!("cutoff {cutoff} too large")))?;
    match cache {
        Some(c) => c.get(unit, n_max),
        None => ShellTable::enumerate(unit, n_max, DEFAULT_MEMORY_BUDGET).map(Arc::new),
    }
}

/// `N(mu) = #{k : k^2 <= mu}`, boundary shells included.
pub fn count_fermions<T: Real>(table: &ShellTable<T>, mu: T) -> Result<u64> {
    let j = table.fermi_index(mu)?;
    Ok(table.m[..=j].iter().map(|&m| m as u64).sum())
}

/// `E_0(mu) = sum_{k^2 <= mu} k^2`, accumulated in increasing shell order.
pub fn fermi_sea_energy<T: Real>(table: &ShellTable<T>, mu: T) -> Result<T> {
    let j = table.fermi_index(mu)?;
    let acc: Accumulator<T> = (0..=j)
        .map(|i| T::count(table.m[i] as u64) * table.energy(i))
        .collect();
    Ok(acc.value())
}

/// Deviation of the lattice density from the continuum value and its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityCheck<T> {
    pub density: T,
    pub deviation: T,
    pub bound: T,
    pub holds: bool,
}

/// `|N(mu)/L^2 - mu/(4 pi)|` against `2 sqrt(mu) / (pi L) + 3 / L^2`.
pub fn density_deviation<T: Real>(table: &ShellTable<T>, params: &ModelParams<T>) -> Result<DensityCheck<T>> {
    let n = count_fermions(table, params.mu)?;
    let area = params.area();
    let density = T::count(n) / area;
    let deviation = (density - params.mu / (T::lit(4.0) * T::PI())).abs();
    let bound = T::lit(2.0) * params.mu.sqrt() / (T::PI() * params.l) + T::lit(3.0) / area;
    Ok(DensityCheck {
        density,
        deviation,
        bound,
        holds: deviation <= bound,
    })
}
