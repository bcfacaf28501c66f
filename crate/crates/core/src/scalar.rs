//! Scalar abstraction shared by the floating-point kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used by the special functions, SN ratios, GLM and IPF fitters.
///
/// Implemented for `f32` and `f64`. Iterative tolerances are clamped to a
/// small multiple of [`Float::epsilon`] so the same code converges in
/// single precision.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Converts an integer count into this scalar.
    #[inline]
    fn count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    /// Lossy conversion to `f64` for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `max(tol, factor * epsilon)`, the tightest tolerance this type can honor.
    #[inline]
    fn attainable(tol: f64, factor: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(factor);
        Self::lit(tol).max(floor)
    }
}

impl Real for f32 {}
impl Real for f64 {}
