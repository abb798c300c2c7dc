//! Floating-point abstraction shared by the plant model, the solver and the
//! validation metrics.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar accepted by the generic numerical core: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Copy + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Values outside the target range saturate to infinity.
    fn lit(value: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn lit(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(value: f64) -> Self {
        value
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Relative closeness with an absolute floor of `tol` around zero.
pub fn approx_eq<T: Scalar>(a: T, b: T, tol: T) -> bool {
    let scale = a.abs().max(b.abs()).max(T::one());
    (a - b).abs() <= tol * scale
}
