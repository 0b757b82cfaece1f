//! Scalar abstraction for the numeric kernels.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numeric kernels are generic over.
///
/// `f64` is the shipped default; `f32` satisfies the same bounds for callers
/// that want a narrower type.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn from_f64_c(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 constant")
    }

    /// Widens to `f64` for reporting and serialization.
    fn to_f64_c(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar fits in f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for embedding `f64` constants in generic code.
pub fn c<F: Scalar>(v: f64) -> F {
    F::from_f64_c(v)
}
