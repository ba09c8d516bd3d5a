//! Scalar abstractions.
//!
//! `Real` covers the floating-point paths (f32, f64). `Field` covers the
//! exact-arithmetic paths used by the misalignment oracles, where f64 and
//! `BigRational` are interchangeable.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, One, ToPrimitive, Zero};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

/// Floating-point scalar used by the closed-form evaluators and solvers.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Converts an f64 literal. Panics only for values that are not finite in `Self`'s range
    /// after rounding, which the crate never passes.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("integer representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Scales an f64-calibrated tolerance to this type's precision.
    #[inline]
    fn tolerance(f64_tol: f64, eps_multiple: f64) -> Self {
        let eps = Self::epsilon().to_f64_lossy();
        Self::lit(f64_tol.max(eps_multiple * eps))
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + LowerExp
        + Sum
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Send
        + Sync
        + 'static
{
}

/// Ordered field: enough structure for exact moment bookkeeping.
pub trait Field:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_int(n: i128) -> Self;
    fn approx_f64(&self) -> f64;
}

impl Field for f64 {
    fn from_int(n: i128) -> Self {
        n as f64
    }
    fn approx_f64(&self) -> f64 {
        *self
    }
}

impl Field for f32 {
    fn from_int(n: i128) -> Self {
        n as f32
    }
    fn approx_f64(&self) -> f64 {
        *self as f64
    }
}

impl Field for BigRational {
    fn from_int(n: i128) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn approx_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Exact rational scalar.
pub type Exact = BigRational;

/// Binomial coefficient as an exact integer. `n` up to 66 fits in u128 easily.
pub fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(16, 8), 12870);
        assert_eq!(binomial(60, 30), 118264581564861424);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn tolerance_scales_with_precision() {
        assert_eq!(<f64 as Real>::tolerance(1e-12, 64.0), 1e-12);
        assert!(<f32 as Real>::tolerance(1e-12, 64.0) > 1e-6);
    }

    #[test]
    fn exact_field_roundtrip() {
        let a = Exact::from_int(3) / Exact::from_int(4);
        assert_eq!(a.approx_f64(), 0.75);
    }
}
