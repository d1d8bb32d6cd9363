//! Floating-point scalar abstraction shared by the tensor engine and the model.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

mod double;

pub use double::DoubleDouble;

/// Real scalar usable in tensors, kernel banks and the optimizer.
///
/// Implemented for `f32`, `f64` and [`DoubleDouble`]. Geometry is always parsed and stored in
/// `f64`; values enter the differentiable path through [`Scalar::of`].
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Error function.
    fn erf(self) -> Self;

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Standard normal CDF.
    fn normal_cdf(self) -> Self {
        let half = Self::of(0.5);
        half * (Self::one() + (self * Self::FRAC_1_SQRT_2()).erf())
    }

    /// Standard normal density.
    fn normal_pdf(self) -> Self {
        let inv_sqrt_2pi = Self::FRAC_1_SQRT_2() * Self::FRAC_2_SQRT_PI() * Self::of(0.5);
        inv_sqrt_2pi * (-(self * self) * Self::of(0.5)).exp()
    }
}

/// Sum of an iterator of scalars, accumulated left to right.
pub fn sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    values.into_iter().fold(T::zero(), |acc, v| acc + v)
}

impl Scalar for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

impl Scalar for f32 {
    fn erf(self) -> Self {
        libm::erff(self)
    }
}
