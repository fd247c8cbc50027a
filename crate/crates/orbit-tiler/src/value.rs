//! Observable values in two arithmetic regimes: exact rationals for finite
//! systems, binary64 for sampled ones. All averaging code is generic over
//! [`Scalar`] so both regimes share a single code path.

use std::fmt::{Debug, Display};
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// A field element the averaging machinery can work in.
///
/// Exactly two implementations exist: `BigRational` (exact) and `f64`
/// (sampled). Comparisons in the exact regime are exact; in the float
/// regime they are plain binary64 comparisons, and callers that need
/// slack say so explicitly via [`Scalar::ge_with_slack`].
pub trait Scalar:
    Clone
    + Debug
    + Display
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    /// True for the exact-rational regime.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_usize(n: usize) -> Self;
    fn from_rational(r: &BigRational) -> Self;

    /// The exact ratio `num/den`, used for empirical masses.
    fn ratio(num: usize, den: usize) -> Self;

    /// `self / n` for a positive count `n`.
    fn div_by(self, n: usize) -> Self;

    fn abs_val(self) -> Self;

    fn min_with(self, other: Self) -> Self;

    fn to_f64(&self) -> f64;

    /// Equality up to `rel` relative tolerance in float mode; exact
    /// equality in rational mode.
    fn approx_eq(&self, other: &Self, rel: f64) -> bool;

    /// `self >= other` with `rel` relative slack in float mode; exact
    /// comparison in rational mode.
    fn ge_with_slack(&self, other: &Self, rel: f64) -> bool;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }

    fn one() -> Self {
        1.0
    }

    fn from_usize(n: usize) -> Self {
        n as f64
    }

    fn from_rational(r: &BigRational) -> Self {
        ToPrimitive::to_f64(r).expect("rational out of f64 range")
    }

    fn ratio(num: usize, den: usize) -> Self {
        num as f64 / den as f64
    }

    fn div_by(self, n: usize) -> Self {
        self / n as f64
    }

    fn abs_val(self) -> Self {
        self.abs()
    }

    fn min_with(self, other: Self) -> Self {
        self.min(other)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn approx_eq(&self, other: &Self, rel: f64) -> bool {
        let scale = 1f64.max(self.abs()).max(other.abs());
        (self - other).abs() <= rel * scale
    }

    fn ge_with_slack(&self, other: &Self, rel: f64) -> bool {
        let scale = 1f64.max(self.abs()).max(other.abs());
        *self >= other - rel * scale
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }

    fn one() -> Self {
        num_traits::One::one()
    }

    fn from_usize(n: usize) -> Self {
        BigRational::from_integer(n.into())
    }

    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }

    fn ratio(num: usize, den: usize) -> Self {
        assert!(den > 0, "ratio with zero denominator");
        BigRational::new(num.into(), den.into())
    }

    fn div_by(self, n: usize) -> Self {
        assert!(n > 0, "division by zero count");
        self / BigRational::from_integer(n.into())
    }

    fn abs_val(self) -> Self {
        Signed::abs(&self)
    }

    fn min_with(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).expect("rational out of f64 range")
    }

    fn approx_eq(&self, other: &Self, _rel: f64) -> bool {
        self == other
    }

    fn ge_with_slack(&self, other: &Self, _rel: f64) -> bool {
        self >= other
    }
}

/// Left-to-right sum. Every averaging routine funnels through this so the
/// float regime produces bit-identical sums for identical slices.
pub fn sum_values<V: Scalar>(vals: &[V]) -> V {
    let mut acc = V::zero();
    for v in vals {
        acc = acc + v.clone();
    }
    acc
}

/// Arithmetic mean of a nonempty slice.
pub fn mean_value<V: Scalar>(vals: &[V]) -> V {
    assert!(!vals.is_empty(), "mean of empty slice");
    sum_values(vals).div_by(vals.len())
}

/// The canonical threshold test: does the length-`n` segment starting at
/// `start` average at least `b`?
///
/// Evaluated as `sum >= b * n` with a left-to-right sum, and used by the
/// plan builder, the class-average assertions, and the chain links alike,
/// so a single comparison semantics governs every threshold decision.
pub fn meets_threshold<V: Scalar>(fvals: &[V], start: usize, n: usize, b: &V) -> bool {
    debug_assert!(n >= 1 && start + n <= fvals.len());
    let sum = sum_values(&fvals[start..start + n]);
    sum >= b.clone() * V::from_usize(n)
}
