//! Scalar abstraction so the numeric core runs on `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used throughout the numeric core.
///
/// The tight tolerances in the test suites are only attainable with `f64`;
/// `f32` is supported for memory-constrained callers.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + ndarray::ScalarOperand
    + Send
    + Sync
    + 'static
{
    fn from_f(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    fn to_f(self) -> f64 {
        self.to_f64().unwrap()
    }

    fn from_usize_(x: usize) -> Self {
        Self::from_usize(x).unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
