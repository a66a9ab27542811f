//! Scalar abstraction shared by every module.
//!
//! Monetary quantities are generic over an ordered numeric type so the same
//! auction and revenue code runs on `f64` (fast, for simulation) and on
//! arbitrary-precision rationals (for knife-edge revenue comparisons, where a
//! single rounding error flips an acceptance decision).

use std::fmt::{Debug, Display};

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Ordered numeric scalar for prices, valuations, and revenues.
///
/// Comparisons must be total on the values this crate produces; validated
/// inputs never contain NaN.
pub trait Scalar: Num + FromPrimitive + ToPrimitive + PartialOrd + Clone + Debug + Display {
    /// Converts a unit count into the scalar domain. Counts stay far below
    /// 2^53, so the conversion is exact for every supported scalar.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("unit count fits in scalar")
    }
}

impl<T> Scalar for T where T: Num + FromPrimitive + ToPrimitive + PartialOrd + Clone + Debug + Display {}

/// Scalar with transcendental operations (exp/ln), required by the jump
/// chain's rates and stationary law.
pub trait RealScalar: Scalar + num_traits::Float {}

impl RealScalar for f32 {}
impl RealScalar for f64 {}
