//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        // Every finite f64 maps to some f32/f64 value.
        Self::from_f64(v).expect("literal out of range for scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }

    #[inline]
    fn two_pi() -> Self {
        Self::TAU()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle<T: Real>(angle: T) -> T {
    let tau = T::two_pi();
    let mut a = angle % tau;
    if a < T::zero() {
        a += tau;
    }
    // `-tiny % tau + tau` can round up to exactly tau.
    if a >= tau {
        a = T::zero();
    }
    a
}

/// Smallest absolute difference between two angles, modulo 2π.
pub fn angle_distance<T: Real>(a: T, b: T) -> T {
    let d = wrap_angle(a - b);
    d.min(T::two_pi() - d)
}

/// `sin(x) / x`, continuous at zero.
#[inline]
pub fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        let x2 = x * x;
        T::one() - x2 / T::lit(6.0) + x2 * x2 / T::lit(120.0)
    } else {
        x.sin() / x
    }
}

/// Derivative of [`sinc`].
#[inline]
pub fn sinc_prime<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        let x2 = x * x;
        -x / T::lit(3.0) + x * x2 / T::lit(30.0)
    } else {
        (x * x.cos() - x.sin()) / (x * x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_range() {
        for a in [-7.0_f64, -1e-18, 0.0, 3.0, 6.283185307179586, 100.0] {
            let w = wrap_angle(a);
            assert!((0.0..std::f64::consts::TAU).contains(&w), "{a} -> {w}");
        }
        assert!((angle_distance(0.1_f64, std::f64::consts::TAU - 0.1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn sinc_branches_agree() {
        for x in [1e-4_f64, 1.0001e-4, -1e-4] {
            assert!((sinc(x) - x.sin() / x).abs() < 1e-15);
            let fd = (sinc(x + 1e-7) - sinc(x - 1e-7)) / 2e-7;
            assert!((sinc_prime(x) - fd).abs() < 1e-7);
        }
        assert!((sinc_prime(0.7_f64) - (0.7 * 0.7_f64.cos() - 0.7_f64.sin()) / 0.49).abs() < 1e-15);
    }
}
