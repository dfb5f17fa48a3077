//! Scalar abstraction over `f32`/`f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable by every numeric kernel in the crate.
///
/// The bound set is what the tensor, feature and training code actually
/// needs: IEEE float arithmetic, in-place ops, conversions from literals,
/// and summation. `f32` and `f64` implement it; `f64` is the precision
/// required by the gradient-checking contracts.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Display + Debug + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` literals and accumulators.
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
