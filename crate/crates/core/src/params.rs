//! Model parameters: box side, binding energy and Fermi energy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// The triple `(L, E_B, mu)` with the dimensionless combinations
/// `mu_tilde = mu / |E_B|` and `l_tilde = L * sqrt(|E_B|)` stored alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub l: T,
    pub e_b: T,
    pub mu: T,
    pub mu_tilde: T,
    pub l_tilde: T,
}

impl<T: Real> ModelParams<T> {
    /// Validates `L > 0`, `E_B < 0`, `mu >= 0` and fills the derived fields.
    ///
    /// `mu = 0` is accepted: it is the one-particle case `N = 1`.
    pub fn new(l: T, e_b: T, mu: T) -> Result<Self> {
        if !(l > T::zero()) || !l.is_finite() {
            return Err(Error::InvalidParams(format!("box side L = {l} must be positive")));
        }
        if !(e_b < T::zero()) || !e_b.is_finite() {
            return Err(Error::InvalidParams(format!("binding energy E_B = {e_b} must be negative")));
        }
        if !(mu >= T::zero()) || !mu.is_finite() {
            return Err(Error::InvalidParams(format!("Fermi energy mu = {mu} must be non-negative")));
        }
        Ok(Self {
            l,
            e_b,
            mu,
            mu_tilde: mu / e_b.abs(),
            l_tilde: l * e_b.abs().sqrt(),
        })
    }

    /// Parameters in units `|E_B| = 1`.
    pub fn dimensionless(mu_tilde: T, l_tilde: T) -> Result<Self> {
        Self::new(l_tilde, -T::one(), mu_tilde)
    }

    /// `|E_B|`.
    #[inline]
    pub fn binding(&self) -> T {
        self.e_b.abs()
    }

    /// Lattice unit `(2 pi / L)^2`.
    #[inline]
    pub fn unit(&self) -> T {
        let q = T::TAU() / self.l;
        q * q
    }

    #[inline]
    pub fn area(&self) -> T {
        self.l * self.l
    }

    /// Same physics with a different Fermi energy.
    pub fn with_mu(&self, mu: T) -> Result<Self> {
        Self::new(self.l, self.e_b, mu)
    }

    /// `log(mu_tilde)`, defined for `mu_tilde > 1`.
    pub fn log_mu_tilde(&self) -> Option<T> {
        (self.mu_tilde > T::one()).then(|| self.mu_tilde.ln())
    }

    pub fn to_f64(&self) -> ModelParams<f64> {
        ModelParams {
            l: self.l.to_f64_lossy(),
            e_b: self.e_b.to_f64_lossy(),
            mu: self.mu.to_f64_lossy(),
            mu_tilde: self.mu_tilde.to_f64_lossy(),
            l_tilde: self.l_tilde.to_f64_lossy(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_fields() {
        let p = ModelParams::new(2.0, -4.0, 10.0f64).unwrap();
        assert_eq!(p.mu_tilde, 2.5);
        assert_eq!(p.l_tilde, 4.0);
        let p = ModelParams::new(std::f64::consts::TAU, -1.0, 2.0).unwrap();
        assert_eq!(p.unit(), 1.0);
    }

    #[test]
    fn rejects_invalid() {
        assert!(ModelParams::new(0.0, -1.0, 1.0f64).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0f64).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0f64).is_err());
        assert!(ModelParams::new(1.0, -1.0, -1.0f64).is_err());
        assert!(ModelParams::new(f64::NAN, -1.0, 1.0).is_err());
    }

    #[test]
    fn dimensionless_units() {
        let p = ModelParams::dimensionless(100.0f64, 5.0).unwrap();
        assert_eq!(p.e_b, -1.0);
        assert_eq!(p.mu, 100.0);
        assert_eq!(p.log_mu_tilde().unwrap(), 100f64.ln());
        assert!(ModelParams::dimensionless(0.5f64, 1.0).unwrap().log_mu_tilde().is_none());
    }
}
