use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar the whole crate is generic over.
///
/// All numerics are written against this trait; `f32` and `f64` implement it.
/// The concrete aliases at the crate root fix `f64`, which is what the CLI and
/// the file formats use.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + Sum
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Lift an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn real<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("constant not representable in scalar type")
}
