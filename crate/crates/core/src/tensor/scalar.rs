use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the numeric code is generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for constants and sampled values.
    fn of(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).expect("f64 converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("every Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
