//! Elementary special functions used by the lattice-sum kernels.

use crate::scalar::Real;

/// `Ein(z) = int_0^z (1 - e^{-s}) / s ds`, entire in `z`.
///
/// Power series for `z <= 2` (all terms share a sign when `z < 0`, so there
/// is no cancellation there), `gamma + ln z + E1(z)` above.
pub fn ein<T: Real>(z: T) -> T {
    if z <= T::lit(2.0) {
        let mut term = z; // z^n / n!
        let mut acc = z;
        let mut n = 1u64;
        loop {
            n += 1;
            term = -term * z / T::count(n);
            let add = term / T::count(n);
            acc = acc + add;
            if add.abs() <= T::epsilon() * acc.abs() || n > 400 {
                break;
            }
        }
        acc
    } else {
        T::euler_gamma() + z.ln() + e1(z)
    }
}

/// Exponential integral `E1(x)` for `x > 0`.
pub fn e1<T: Real>(x: T) -> T {
    debug_assert!(x > T::zero());
    if x <= T::one() {
        // E1 = -gamma - ln x + Ein(x)
        return -T::euler_gamma() - x.ln() + ein(x);
    }
    // Continued fraction, modified Lentz.
    let tiny = T::min_positive_value() / T::epsilon();
    let mut b = x + T::one();
    let mut c = T::one() / tiny;
    let mut d = T::one() / b;
    let mut h = d;
    for i in 1..500u64 {
        let an = -T::count(i * i);
        b = b + T::lit(2.0);
        d = T::one() / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h = h * del;
        if (del - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    h * (-x).exp()
}

/// `(1 - e^{-t x}) / x`, continuous through `x = 0` where it equals `t`.
#[inline]
pub fn phi<T: Real>(t: T, x: T) -> T {
    let y = t * x;
    if y == T::zero() {
        return t;
    }
    -(-y).exp_m1() / x
}

/// `(1 - e^{-t x}(1 + t x)) / x^2`, equal to `t^2 / 2` at `x = 0`.
pub fn psi<T: Real>(t: T, x: T) -> T {
    let y = t * x;
    if y.abs() < T::lit(0.5) {
        // sum_{k>=2} (-1)^k (k-1) y^{k-2} / k!
        let mut fact = T::lit(2.0);
        let mut pow = T::one();
        let mut acc = T::lit(0.5);
        for k in 3..40u64 {
            fact = fact * T::count(k);
            pow = -pow * y;
            let add = T::count(k - 1) * pow / fact;
            acc = acc + add;
            if add.abs() <= T::epsilon() * acc.abs() {
                break;
            }
        }
        return t * t * acc;
    }
    (-(-y).exp_m1() - y * (-y).exp()) / (x * x)
}

/// `atan(sqrt w) / sqrt w` for `w >= 0`, `atanh(sqrt(-w)) / sqrt(-w)` for
/// `-1 < w < 0`. Then `int_{sqrt L}^inf dt / (t^2 + c) = F(c / L) / sqrt L`.
pub fn tail_f<T: Real>(w: T) -> T {
    if w.abs() <= T::lit(0.25) {
        let mut acc = T::zero();
        let mut pow = T::one();
        for k in 0..80u64 {
            let add = pow / T::count(2 * k + 1);
            acc = acc + add;
            if add.abs() <= T::epsilon() * acc.abs() {
                break;
            }
            pow = -pow * w;
        }
        acc
    } else if w > T::zero() {
        let s = w.sqrt();
        s.atan() / s
    } else {
        let s = (-w).sqrt();
        s.atanh() / s
    }
}

/// `(F(w) - 1/(1+w)) / (2w)`, so that
/// `int_{sqrt L}^inf dt / (t^2 + c)^2 = H(c / L) / L^{3/2}`.
pub fn tail_h<T: Real>(w: T) -> T {
    if w.abs() <= T::lit(0.25) {
        let mut acc = T::zero();
        let mut pow = T::one();
        for j in 0..80u64 {
            let add = pow * T::count(j + 1) / T::count(2 * j + 3);
            acc = acc + add;
            if add.abs() <= T::epsilon() * acc.abs() {
                break;
            }
            pow = -pow * w;
        }
        acc
    } else {
        (tail_f(w) - T::one() / (T::one() + w)) / (T::lit(2.0) * w)
    }
}
