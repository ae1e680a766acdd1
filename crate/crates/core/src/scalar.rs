//! Scalar abstraction shared by every numerical module.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Complex numbers over a [`Real`] scalar.
pub type Cx<T> = num_complex::Complex<T>;

/// Real floating-point scalar the numerical core is generic over.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate
/// assume `f64`; `f32` works for the algebra but not at those tolerances.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self;
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

#[inline]
pub fn cx<T: Real>(re: T, im: T) -> Cx<T> {
    Cx::new(re, im)
}

#[inline]
pub fn cx_re<T: Real>(re: T) -> Cx<T> {
    Cx::new(re, T::zero())
}
