//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar; implemented for `f32` and `f64`.
///
/// Everything downstream (matrices, models, engines) is generic over this
/// trait. The crate-root aliases pin `f64`, which the gradient-exactness
/// tolerances assume.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal convertible to scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}
