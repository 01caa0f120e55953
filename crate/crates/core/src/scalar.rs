//! Scalar abstraction for all probability arithmetic.
//!
//! Every quantity in this crate is a plain floating-point scalar in nats.
//! The math is written once over [`Scalar`] and instantiated at `f32` or
//! `f64` through the aliases at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + AddAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + NumCast + AddAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

/// Convert an `f64` constant into the working scalar type.
///
/// Panics only if the target type cannot represent any finite `f64`,
/// which cannot happen for `f32`/`f64`.
#[inline]
pub fn real<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("f64 constant must convert to the scalar type")
}

/// Widen a scalar to `f64` for reporting and serialization.
#[inline]
pub fn to_f64<F: Scalar>(x: F) -> f64 {
    x.to_f64().expect("scalar must widen to f64")
}
