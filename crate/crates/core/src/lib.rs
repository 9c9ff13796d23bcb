//! Lattice sums, polaron equations and one-body spectra for a two-dimensional
//! Fermi gas in a periodic box interacting with a static point impurity.
//!
//! Everything numerical is generic over [`Real`]; the aliases below fix the
//! scalar to `f64`, which is what the tolerances in the docs assume.

pub mod certify;
pub mod error;
pub mod interp;
pub mod lattice;
pub mod params;
pub mod polaron;
pub mod regsums;
pub mod riemann;
pub mod spectrum;
pub mod roots;
pub mod scalar;
pub mod special;
pub mod sum;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ModelParams = params::ModelParams<f64>;
pub type ShellTable = lattice::ShellTable<f64>;
pub type ShellCache = lattice::ShellCache<f64>;
pub type PolaronSolution = polaron::PolaronSolution<f64>;
pub type PerturbedSolution = polaron::PerturbedSolution<f64>;
pub type RBarBound = polaron::RBarBound<f64>;
pub type SpectrumResult = spectrum::SpectrumResult<f64>;
pub type SectorMatrix = spectrum::SectorMatrix<f64>;
pub type Enclosure = certify::Enclosure<f64>;
pub type Diagnostics = certify::Diagnostics<f64>;
pub type EncloseOptions = certify::EncloseOptions<f64>;
pub type TruncatedSum = regsums::TruncatedSum<f64>;
pub type BoundReport = regsums::BoundReport<f64>;
