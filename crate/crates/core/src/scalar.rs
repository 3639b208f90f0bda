//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
///
/// Everything in the engine is written against this trait. The concrete
/// aliases at the crate root pick `f64` for the reference pipeline.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the two implementors.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::lit(2.0)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `a + t (b - a)`; returns `a` exactly when `a == b`.
#[inline]
pub fn lerp<S: Real>(a: S, b: S, t: S) -> S {
    a + t * (b - a)
}

/// Mean computed as an offset from the first element, so a constant input
/// returns that constant bit-for-bit.
pub fn shifted_mean<S: Real>(values: impl IntoIterator<Item = S>) -> Option<S> {
    let mut iter = values.into_iter();
    let first = iter.next()?;
    let mut acc = S::zero();
    let mut n = 1usize;
    for v in iter {
        acc += v - first;
        n += 1;
    }
    Some(first + acc / S::from_usize_lossy(n))
}
