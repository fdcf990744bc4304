//! Floating-point abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::str::FromStr;

use ndarray::ScalarOperand;
use num_traits::{Float, FloatConst, FromPrimitive};

/// Real scalar: `f32` or `f64`.
///
/// Besides the usual [`Float`] surface this adds the error function pair,
/// which `num-traits` does not provide.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    fn erf_fn(self) -> Self;
    fn erfc_fn(self) -> Self;

    /// Converts an `f64` literal. Lossy for `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable as float")
    }
}

impl Scalar for f64 {
    #[inline]
    fn erf_fn(self) -> Self {
        libm::erf(self)
    }
    #[inline]
    fn erfc_fn(self) -> Self {
        libm::erfc(self)
    }
}

impl Scalar for f32 {
    #[inline]
    fn erf_fn(self) -> Self {
        libm::erff(self)
    }
    #[inline]
    fn erfc_fn(self) -> Self {
        libm::erfcf(self)
    }
}

/// SiLU activation `x·sigmoid(x)`.
#[inline]
pub fn silu<S: Scalar>(x: S) -> S {
    x * sigmoid(x)
}

/// Derivative of [`silu`]: `σ(x)(1 + x(1 − σ(x)))`.
#[inline]
pub fn silu_deriv<S: Scalar>(x: S) -> S {
    let s = sigmoid(x);
    s * (S::one() + x * (S::one() - s))
}

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_matches_reference_values() {
        // Abramowitz & Stegun table 7.1
        assert!((0.5f64.erf_fn() - 0.520_499_877_813_046_5).abs() < 1e-15);
        assert!((1.0f64.erf_fn() - 0.842_700_792_949_714_9).abs() < 1e-15);
        assert!((2.0f64.erfc_fn() - 0.004_677_734_981_047_266).abs() < 1e-17);
        assert!((1.0f32.erf_fn() - 0.842_700_8).abs() < 1e-6);
    }

    #[test]
    fn silu_derivative_matches_central_difference() {
        for &x in &[-6.0f64, -1.3, -0.2, 0.0, 0.7, 2.5, 9.0] {
            let h = 1e-6;
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_deriv(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn sigmoid_is_stable_in_the_tails() {
        assert_eq!(sigmoid(-800.0f64), 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
        assert!(silu(-800.0f64).abs() < 1e-300);
    }
}
