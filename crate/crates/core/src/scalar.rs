//! Floating-point abstraction shared by the numerical modules.

use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Floating point scalar usable by every estimator: `f32` or `f64`.
pub trait Scalar: NdFloat + FromPrimitive + std::iter::Sum + Default {
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// sign(v) with sign(0) = 0.
#[inline]
pub fn signum0<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
