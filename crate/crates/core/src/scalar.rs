use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the estimators are generic over.
///
/// Implemented for `f32` and `f64`. All accumulation happens in the scalar
/// type itself, so `f32` instantiations trade accuracy for memory.
pub trait Scalar:
    NdFloat + Float + FromPrimitive + ToPrimitive + Default + Sum + Debug + Display + serde::Serialize
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
