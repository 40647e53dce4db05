//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the controllers (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

/// Converts a scalar back to `f64` (lossless for `f32`/`f64`).
#[inline]
pub fn to_f64<T: Real>(v: T) -> f64 {
    ToPrimitive::to_f64(&v).unwrap_or(f64::NAN)
}

/// Converts a vector to plain `f64` values for error payloads and serialization.
pub fn vec_to_f64<T: Real>(v: &nalgebra::DVector<T>) -> Vec<f64> {
    v.iter().map(|&x| to_f64(x)).collect()
}
