//! Scalar abstraction: the numeric core is generic over a floating type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, NumCast, ToPrimitive};

/// Floating scalar accepted by tensors, models and the boosting driver.
///
/// Implemented for `f32` and `f64` through the blanket impl below.
pub trait Real:
    Float
    + NumAssignOps
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Shorthand for converting an `f64` literal or intermediate.
    fn of(x: f64) -> Self {
        NumCast::from(x).expect("finite f64 converts to scalar")
    }

    /// Lossy view as `f64`, used for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Count as a scalar (exact for the sizes this crate handles).
    fn from_count(n: usize) -> Self {
        Self::of(n as f64)
    }
}

impl<T> Real for T where
    T: Float
        + NumAssignOps
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}
