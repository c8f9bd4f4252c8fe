//! Working-precision abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};

/// Floating-point scalar the matrix and network kernels are generic over:
/// `f64` for the double path, `f32` for the mixed-precision paths.
pub trait Real:
    Float + NumAssign + Sum<Self> + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn into_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }
}
