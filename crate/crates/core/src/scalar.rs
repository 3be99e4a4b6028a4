//! Scalar abstraction: the whole crate is generic over the floating-point
//! type through [`Scalar`], implemented for `f32` and `f64`.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::Distribution;
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

/// Floating-point scalar usable by every algorithm in the crate.
///
/// Besides the arithmetic bounds this adds the two primitive random draws the
/// noise models need; they are methods (rather than a blanket `Distribution`
/// bound) so the trait can be implemented exactly for the types the RNG stack
/// supports.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr<Err = std::num::ParseFloatError>
    + Send
    + Sync
    + 'static
{
    /// Uniform draw from `[lo, hi)`.
    fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self;

    /// Standard normal draw.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f64 {
    fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
        rng.random_range(lo..hi)
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        rand_distr::StandardNormal.sample(rng)
    }
}

impl Scalar for f32 {
    fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f32, hi: f32) -> f32 {
        rng.random_range(lo..hi)
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f32 {
        rand_distr::StandardNormal.sample(rng)
    }
}

/// Shorthand for lifting an `f64` constant into the scalar type.
#[inline]
pub fn c<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("constant representable in scalar type")
}
