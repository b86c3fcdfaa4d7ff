use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive};

/// Floating-point element type the model, caches and engine are generic over.
///
/// Implemented for every type with the listed bounds, in practice `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + Sum + AddAssign + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossless-enough conversion used for weight generation and reporting.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + Sum + AddAssign + Default + Debug + Display + Send + Sync + 'static
{
}
