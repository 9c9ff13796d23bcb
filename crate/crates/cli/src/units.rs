//! The single unit conversion of the CLI.
//!
//! Points arrive in physical units `(L, E_B, mu)`. Solvers run in units
//! `|E_B| = 1`, i.e. at `(L~, -1, mu~)` with `L~ = L sqrt|E_B|` and
//! `mu~ = mu / |E_B|`. Energies coming back are multiplied by `|E_B|`;
//! `G_mu`, `r_bar` and the ratios are scale free and pass through unchanged.

use polaron_core::{Enclosure, ModelParams, Result};

use crate::config::Point;

#[derive(Debug, Clone, Copy)]
pub struct Scaled {
    pub physical: ModelParams,
    pub model: ModelParams,
}

impl Scaled {
    pub fn new(p: Point) -> Result<Self> {
        let physical = ModelParams::new(p.l, p.e_b, p.mu)?;
        let model = ModelParams::dimensionless(physical.mu_tilde, physical.l_tilde)?;
        Ok(Self { physical, model })
    }

    /// Model energy to physical energy.
    pub fn energy(&self, e: f64) -> f64 {
        e * self.physical.binding()
    }

    /// Physical energy to model energy.
    pub fn to_model(&self, e: f64) -> f64 {
        e / self.physical.binding()
    }

    pub fn enclosure(&self, enc: &Enclosure) -> Enclosure {
        let e = |x: f64| self.energy(x);
        let pair = |(a, b): (f64, f64)| (e(a), e(b));
        let mut out = enc.clone();
        out.params = self.physical;
        out.e_free = e(enc.e_free);
        out.lower_shift = e(enc.lower_shift);
        out.exact_shift = e(enc.exact_shift);
        out.upper_shift = e(enc.upper_shift);
        out.naive_lower = e(enc.naive_lower);
        out.tolerance = e(enc.tolerance);
        let d = &mut out.diagnostics;
        d.polaron_bracket = pair(d.polaron_bracket);
        d.polaron_residual = e(d.polaron_residual);
        d.perturbed_bracket = d.perturbed_bracket.map(pair);
        d.perturbed_residual = d.perturbed_residual.map(e);
        d.shift_error = e(d.shift_error);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let s = Scaled::new(Point { l: 2.0, e_b: -4.0, mu: 8.0 }).unwrap();
        assert_eq!(s.model.mu_tilde, 2.0);
        assert_eq!(s.model.l, 4.0);
        assert_eq!(s.model.e_b, -1.0);
        assert_eq!(s.energy(s.to_model(3.0)), 3.0);
        assert!(Scaled::new(Point { l: 1.0, e_b: 1.0, mu: 1.0 }).is_err());
    }
}
