//! Scalar abstraction: the whole library is generic over the floating type.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, Signed, ToPrimitive};
use rustfft::FftNum;
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating scalar the spectral machinery runs on (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Signed
    + FftNum
    + Sum<Self>
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; panics only on NaN-producing inputs.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 not representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand used all over the crate for converting literals.
#[inline]
pub fn r<T: Real>(v: f64) -> T {
    T::of(v)
}
