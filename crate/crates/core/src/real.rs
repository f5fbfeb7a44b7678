//! Scalar types the residual can be evaluated in: `f64` for the solver and a
//! double-double type for reference computations.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use twofloat::TwoFloat;

pub trait Real:
    Copy
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + Send
    + Sync
    + 'static
{
    fn lift(x: f64) -> Self;
    /// Nearest `f64`.
    fn lower(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    #[inline]
    fn zero() -> Self {
        Self::lift(0.0)
    }

    #[inline]
    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Real for f64 {
    #[inline(always)]
    fn lift(x: f64) -> Self {
        x
    }

    #[inline(always)]
    fn lower(self) -> f64 {
        self
    }

    #[inline(always)]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    #[inline(always)]
    fn abs(self) -> Self {
        f64::abs(self)
    }

    #[inline(always)]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }

    #[inline(always)]
    fn zero() -> Self {
        0.0
    }

    #[inline(always)]
    fn max(self, other: Self) -> Self {
        f64::max(self, other)
    }
}

/// Unevaluated sum of two doubles, about 32 significant digits.
///
/// Arithmetic is delegated to `twofloat` except division, which is done by
/// long division on the high word so the quotient keeps full precision.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct DoubleDouble(TwoFloat);

impl DoubleDouble {
    pub fn hi(self) -> f64 {
        self.0.hi()
    }

    pub fn lo(self) -> f64 {
        self.0.lo()
    }
}

impl Real for DoubleDouble {
    #[inline]
    fn lift(x: f64) -> Self {
        DoubleDouble(TwoFloat::from(x))
    }

    #[inline]
    fn lower(self) -> f64 {
        self.0.hi() + self.0.lo()
    }

    #[inline]
    fn sqrt(self) -> Self {
        DoubleDouble(self.0.sqrt())
    }

    #[inline]
    fn abs(self) -> Self {
        DoubleDouble(self.0.abs())
    }

    #[inline]
    fn is_finite(self) -> bool {
        self.0.is_valid()
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        DoubleDouble(self.0 + rhs.0)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        DoubleDouble(self.0 - rhs.0)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        DoubleDouble(self.0 * rhs.0)
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let b = rhs.0;
        let q1 = self.0.hi() / b.hi();
        let r = self.0 - b * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b * q2;
        let q3 = r.hi() / b.hi();
        DoubleDouble(TwoFloat::new_add(q1, q2) + q3)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        DoubleDouble(-self.0)
    }
}

impl AddAssign for DoubleDouble {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl SubAssign for DoubleDouble {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        self.0 -= rhs.0;
    }
}

/// Lifts every entry of a node vector.
#[inline]
pub fn lift4<S: Real>(w: &[f64; 4]) -> [S; 4] {
    w.map(S::lift)
}

#[cfg(test)]
mod tests {
    use super::*;

    type D = DoubleDouble;

    /// Residual of `x` against the exact value `hi + lo`, in double-double.
    fn err(x: D, hi: f64, lo: f64) -> f64 {
        ((x - D::lift(hi)) - D::lift(lo)).lower().abs()
    }

    #[test]
    fn keeps_low_bits() {
        let x = D::lift(1.0) + D::lift(1e-20);
        assert_eq!(x.lower(), 1.0);
        assert_eq!((x - D::lift(1.0)).lower(), 1e-20);
        assert_eq!((1.0f64 + 1e-20) - 1.0, 0.0);
    }

    #[test]
    fn products_are_exact_to_double_double() {
        let t = 2f64.powi(-40);
        let x = D::lift(1.0) + D::lift(t);
        // (1 + t)^2 = 1 + 2t + t^2
        assert_eq!(err(x * x, 1.0, 2.0 * t) - t * t, 0.0);
    }

    #[test]
    fn division_is_accurate() {
        for (a, b) in [(1.0, 3.0), (2.0, 7.0), (101325.0, 287.05 * 288.15), (-5.0, 1e-3 + 1e-12)] {
            let (da, db) = (D::lift(a), D::lift(b));
            let q = da / db;
            let back = (q * db - da).lower().abs();
            assert!(back <= 1e-30 * a.abs(), "{a}/{b}: {back:e}");
        }
        let third = D::lift(1.0) / D::lift(3.0);
        assert!((third * D::lift(3.0) - D::lift(1.0)).lower().abs() < 1e-31);
    }

    #[test]
    fn square_root_is_accurate() {
        let x = D::lift(2.0) + D::lift(1e-20);
        let s = x.sqrt();
        assert!((s * s - x).lower().abs() < 1e-31);
    }

    #[test]
    fn ordering_and_helpers() {
        let (a, b) = (D::lift(1.0), D::lift(1.0) + D::lift(1e-25));
        assert!(b > a);
        assert_eq!(a.max(b), b);
        assert_eq!((-b).abs(), b);
        assert!(D::zero().is_finite());
        assert!(!(D::lift(1.0) / D::lift(0.0)).is_finite());
        assert_eq!(f64::max(2.0, 1.0), Real::max(2.0, 1.0));
    }
}
