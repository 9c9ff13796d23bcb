//! Compensated accumulation with a running magnitude for rounding allowances.

use crate::scalar::Real;

/// Neumaier-compensated sum that also tracks `sum |x_i|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator<T> {
    sum: T,
    comp: T,
    magnitude: T,
}

impl<T: Real> Accumulator<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
            magnitude: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, v: T) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp = self.comp + ((self.sum - t) + v);
        } else {
            self.comp = self.comp + ((v - t) + self.sum);
        }
        self.sum = t;
        self.magnitude = self.magnitude + v.abs();
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.comp
    }

    /// Sum of the absolute values of everything added so far.
    #[inline]
    pub fn magnitude(&self) -> T {
        self.magnitude
    }

    /// Bound on the accumulated rounding error, assuming each addend was
    /// itself computed to a few ulps.
    #[inline]
    pub fn rounding_allowance(&self) -> T {
        T::lit(8.0) * T::epsilon() * self.magnitude
    }

    pub fn merge(&mut self, other: &Self) {
        let magnitude = self.magnitude + other.magnitude;
        self.add(other.sum);
        self.add(other.comp);
        self.magnitude = magnitude;
    }
}

impl<T: Real> FromIterator<T> for Accumulator<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}
