//! Scalar abstractions.
//!
//! Exact routines (elimination, inverses, simplex) are generic over an
//! [`ExactInt`] ring and its fraction field `Ratio<T>`. Likelihood code is
//! generic over a [`Real`] float type.

use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, NumAssign, Signed, ToPrimitive};

/// An exact integer ring suitable for fraction-free elimination.
///
/// Implemented for `i64`, `i128` and `BigInt`. Fixed-width types overflow on
/// large determinants; the crate root aliases [`crate::Int`] to `BigInt`.
pub trait ExactInt:
    Clone + Integer + Signed + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}

impl<T> ExactInt for T where
    T: Clone
        + Integer
        + Signed
        + FromPrimitive
        + ToPrimitive
        + fmt::Debug
        + fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// Exact field arithmetic used by the simplex routines.
pub trait ExactField:
    Clone
    + num_traits::Num
    + Signed
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl<T: ExactInt> ExactField for Ratio<T> {}

/// Floating-point scalar for likelihood evaluation.
pub trait Real: Float + FromPrimitive + NumAssign + fmt::Debug + fmt::Display + Send + Sync + 'static {
    fn log_gamma(self) -> Self;

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable as float")
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 representable as float")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float representable as f64")
    }
}

impl Real for f64 {
    fn log_gamma(self) -> Self {
        crate::special::ln_gamma(self)
    }
}

impl Real for f32 {
    fn log_gamma(self) -> Self {
        crate::special::ln_gamma(self as f64) as f32
    }
}

/// Converts an exact integer to `i64`, panicking on overflow.
pub fn to_i64<T: ExactInt>(v: &T) -> Option<i64> {
    v.to_i64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn takes_int<T: ExactInt>(v: T) -> T {
        v.clone() * v
    }

    #[test]
    fn exact_int_impls() {
        assert_eq!(takes_int(3i64), 9);
        assert_eq!(takes_int(3i128), 9);
        assert_eq!(takes_int(BigInt::from(3)), BigInt::from(9));
    }

    #[test]
    fn real_ln_gamma_agrees_across_widths() {
        let a = 4.5f64.log_gamma();
        let b = 4.5f32.log_gamma();
        assert!((a - b as f64).abs() < 1e-5);
    }
}
