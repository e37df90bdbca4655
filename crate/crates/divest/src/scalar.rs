//! Scalar abstraction: the numeric type the whole crate is generic over.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, StandardNormal, StandardUniform};

use crate::{Error, Result};

/// Floating-point scalar: `f32` or `f64`.
///
/// Bundles the `num-traits` float surface with casting helpers and the few
/// random draws the distribution samplers need, so downstream code never has
/// to thread `rand_distr` bounds around.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Display
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy cast from `f64`; used for literal constants in generic code.
    fn cast(x: f64) -> Self;

    /// Widen to `f64`.
    fn f64(self) -> f64;

    /// One standard-normal draw.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One uniform draw in `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One Beta(a, b) draw.
    fn beta_draw<R: Rng + ?Sized>(rng: &mut R, a: Self, b: Self) -> Result<Self>;
}

/// Strictly positive and finite; rejects NaN.
pub(crate) fn is_positive_finite<T: Scalar>(v: T) -> bool {
    v.is_finite() && v > T::zero()
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn cast(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardUniform.sample(rng)
            }

            fn beta_draw<R: Rng + ?Sized>(rng: &mut R, a: Self, b: Self) -> Result<Self> {
                let dist = BetaDist::new(a, b)
                    .map_err(|e| Error::Argument(format!("beta({a},{b}): {e}")))?;
                Ok(dist.sample(rng))
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
