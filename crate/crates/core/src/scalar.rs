//! Scalar abstraction shared by every solver in the crate.
//!
//! All market quantities are generic over [`Scalar`], which is implemented for
//! any IEEE float type (`f32`, `f64`). The closed forms only need field
//! operations, but the verifier relies on `sqrt` and bracketing searches, so
//! the bound is `Float` rather than a plain field.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Relative tolerance used by every supply-demand balance check.
pub const BALANCE_RTOL: f64 = 1e-9;

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite `f64` values at all, which no float type does.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("float literal must be representable")
    }

    /// Converts a participant count.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count must be representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

/// `|a - b| <= rtol * max(1, |b|)`.
#[inline]
pub fn approx_eq_scaled<T: Scalar>(a: T, b: T, rtol: T) -> bool {
    (a - b).abs() <= rtol * T::one().max(b.abs())
}

/// Balance check with the crate-wide tolerance convention.
#[inline]
pub fn balanced<T: Scalar>(supply: T, demand: T) -> bool {
    approx_eq_scaled(supply, demand, T::lit(BALANCE_RTOL))
}

/// Relative distance `|a - b| / max(1, |a|, |b|)`.
#[inline]
pub fn rel_diff<T: Scalar>(a: T, b: T) -> T {
    (a - b).abs() / T::one().max(a.abs()).max(b.abs())
}
