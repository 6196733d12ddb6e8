//! Scalar abstraction shared by every numeric module.
//!
//! All geometry, learning and search code is written against [`Scalar`], so
//! the same pipeline runs in `f32` or `f64`. Conversions to and from `f64`
//! go through nalgebra's subset machinery, which in turn rests on
//! `num-traits`.

use nalgebra::RealField;
use std::fmt::{Debug, Display};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar: RealField + Copy + Debug + Display + num_traits::FromPrimitive {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Lossy conversion back to `f64`, used for logging and file output.
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    nalgebra::try_convert::<T, f64>(x).unwrap_or(f64::NAN)
}
