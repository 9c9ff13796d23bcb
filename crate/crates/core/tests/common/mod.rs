//! Independent reference computations: per-point lattice loops and a dense
//! symmetric eigensolver. Nothing here goes through the shell table.

#![allow(dead_code)]

use nalgebra::DMatrix;

/// Neumaier-compensated sum.
pub fn ksum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// `i^2 + j^2` for every integer point with `i^2 + j^2 <= level_max`.
pub fn lattice_levels(level_max: u64) -> Vec<u64> {
    let r = (level_max as f64).sqrt() as i64 + 1;
    let mut out = Vec::new();
    for i in -r..=r {
        for j in -r..=r {
            let n = (i * i + j * j) as u64;
            if n <= level_max {
                out.push(n);
            }
        }
    }
    out.sort_unstable();
    out
}

pub fn unit(l: f64) -> f64 {
    (std::f64::consts::TAU / l).powi(2)
}

/// `(1/L^2) [sum_{k^2 <= mu} 1/(k^2 + a) + sum_{mu < k^2 <= cut} (1/(k^2 + a) - 1/(k^2 + tau))]`.
pub fn brute_g(l: f64, a: f64, mu: f64, tau: f64, cut_level: u64) -> f64 {
    let u = unit(l);
    let terms = lattice_levels(cut_level).into_iter().map(|n| {
        let s = u * n as f64;
        if s <= mu {
            1.0 / (s + a)
        } else {
            (tau - a) / ((s + a) * (s + tau))
        }
    });
    ksum(terms) / (l * l)
}

/// `(1/L^2) sum_{k^2 <= cut} [1/(k^2 + a) - 1/(k^2 - z)]`.
pub fn brute_s(l: f64, a: f64, z: f64, cut_level: u64) -> f64 {
    let u = unit(l);
    let terms = lattice_levels(cut_level).into_iter().map(|n| {
        let s = u * n as f64;
        -(z + a) / ((s + a) * (s - z))
    });
    ksum(terms) / (l * l)
}

/// Eigenvalues, ascending, of the truncated operator on `k^2 <= u n_cut`:
/// `diag(k^2) - g eta eta^T` with `eta_k = 1/L` and
/// `1/g = (1/L^2) sum_k 1/(k^2 + a)`, so that `-a` is an eigenvalue.
pub fn dense_truncated_eigenvalues(l: f64, a: f64, n_cut: u64) -> Vec<f64> {
    let u = unit(l);
    let ks: Vec<f64> = lattice_levels(n_cut).into_iter().map(|n| u * n as f64).collect();
    let dim = ks.len();
    let inv_g = ksum(ks.iter().map(|s| 1.0 / (s + a))) / (l * l);
    let w = 1.0 / (inv_g * l * l);
    let mut m = DMatrix::<f64>::from_element(dim, dim, -w);
    for (i, s) in ks.iter().enumerate() {
        m[(i, i)] += s;
    }
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// `(value, multiplicity)` pairs expanded into a flat ascending list.
pub fn expand(pairs: &[(f64, u32)]) -> Vec<f64> {
    let mut v: Vec<f64> = pairs.iter().flat_map(|&(x, m)| std::iter::repeat(x).take(m as usize)).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Largest `|x - y| / max(|y|, floor)` over paired entries.
pub fn max_rel_diff(xs: &[f64], ys: &[f64], floor: f64) -> f64 {
    assert_eq!(xs.len(), ys.len());
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}
