//! Exact rational numbers.
//!
//! Thin newtype over `num_rational::Ratio<i128>`. Every arithmetic operator is
//! checked: an overflow of the 128-bit numerator or denominator panics with a
//! descriptive message instead of wrapping. The `checked_*` methods are the
//! non-panicking variants.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// An exact fraction in canonical form (reduced, positive denominator).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(Ratio<i128>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RationalParseError {
    #[error("empty rational string")]
    Empty,
    #[error("invalid integer in rational {0:?}")]
    InvalidInteger(String),
    #[error("zero denominator in rational {0:?}")]
    ZeroDenominator(String),
}

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));
    pub const HALF: Rational = Rational(Ratio::new_raw(1, 2));

    /// Builds `numer/denom`, reducing to canonical form.
    ///
    /// Panics if `denom` is zero.
    pub fn new(numer: i128, denom: i128) -> Self {
        assert!(denom != 0, "rational with zero denominator");
        Rational(Ratio::new(numer, denom))
    }

    pub fn from_integer(value: i128) -> Self {
        Rational(Ratio::from_integer(value))
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    pub fn min(self, other: Self) -> Self {
        std::cmp::min(self, other)
    }

    pub fn max(self, other: Self) -> Self {
        std::cmp::max(self, other)
    }

    /// `|self - other|`.
    pub fn dist(self, other: Self) -> Self {
        (self - other).abs()
    }

    /// `1 - self`, the reflection of a point of the unit interval.
    pub fn reflect(self) -> Self {
        Rational::ONE - self
    }

    pub fn checked_add(&self, rhs: &Self) -> Option<Self> {
        self.0.checked_add(&rhs.0).map(Rational)
    }

    pub fn checked_sub(&self, rhs: &Self) -> Option<Self> {
        self.0.checked_sub(&rhs.0).map(Rational)
    }

    pub fn checked_mul(&self, rhs: &Self) -> Option<Self> {
        self.0.checked_mul(&rhs.0).map(Rational)
    }

    pub fn checked_div(&self, rhs: &Self) -> Option<Self> {
        if rhs.is_zero() {
            return None;
        }
        self.0.checked_div(&rhs.0).map(Rational)
    }

    /// Lossy conversion for display and plotting only.
    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// Decimal rendering with exactly `digits` fractional digits, rounded
    /// half away from zero. Computed by long division, not through `f64`.
    pub fn to_decimal(&self, digits: usize) -> String {
        let negative = self.is_negative();
        let num = self.numer().unsigned_abs();
        let den = self.denom().unsigned_abs();
        let mut int_part = num / den;
        let mut rem = num % den;
        let mut frac: Vec<u8> = Vec::with_capacity(digits);
        for _ in 0..digits {
            rem *= 10;
            frac.push((rem / den) as u8);
            rem %= den;
        }
        // round half away from zero on the next digit
        if rem * 2 >= den {
            let mut carry = true;
            for digit in frac.iter_mut().rev() {
                if *digit == 9 {
                    *digit = 0;
                } else {
                    *digit += 1;
                    carry = false;
                    break;
                }
            }
            if carry {
                int_part += 1;
            }
        }
        let all_zero = int_part == 0 && frac.iter().all(|&d| d == 0);
        let mut out = String::new();
        if negative && !all_zero {
            out.push('-');
        }
        out.push_str(&int_part.to_string());
        if digits > 0 {
            out.push('.');
            out.extend(frac.iter().map(|d| char::from(b'0' + d)));
        }
        out
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Rational {
    type Err = RationalParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(RationalParseError::Empty);
        }
        let parse_int = |part: &str| {
            part.trim()
                .parse::<i128>()
                .map_err(|_| RationalParseError::InvalidInteger(s.to_string()))
        };
        match s.split_once('/') {
            None => Ok(Rational::from_integer(parse_int(s)?)),
            Some((n, d)) => {
                let numer = parse_int(n)?;
                let denom = parse_int(d)?;
                if denom == 0 {
                    return Err(RationalParseError::ZeroDenominator(s.to_string()));
                }
                Ok(Rational::new(numer, denom))
            }
        }
    }
}

impl From<i128> for Rational {
    fn from(value: i128) -> Self {
        Rational::from_integer(value)
    }
}

impl From<i64> for Rational {
    fn from(value: i64) -> Self {
        Rational::from_integer(value.into())
    }
}

impl From<i32> for Rational {
    fn from(value: i32) -> Self {
        Rational::from_integer(value.into())
    }
}

impl From<usize> for Rational {
    fn from(value: usize) -> Self {
        Rational::from_integer(value as i128)
    }
}

macro_rules! checked_binop {
    ($trait:ident, $method:ident, $checked:ident, $what:literal) => {
        impl $trait for Rational {
            type Output = Rational;

            fn $method(self, rhs: Rational) -> Rational {
                self.$checked(&rhs)
                    .unwrap_or_else(|| panic!(concat!("rational ", $what, " overflow: {} and {}"), self, rhs))
            }
        }

        impl<'a> $trait<&'a Rational> for Rational {
            type Output = Rational;

            fn $method(self, rhs: &'a Rational) -> Rational {
                $trait::$method(self, *rhs)
            }
        }
    };
}

checked_binop!(Add, add, checked_add, "addition");
checked_binop!(Sub, sub, checked_sub, "subtraction");
checked_binop!(Mul, mul, checked_mul, "multiplication");

impl Div for Rational {
    type Output = Rational;

    fn div(self, rhs: Rational) -> Rational {
        assert!(!rhs.is_zero(), "rational division by zero");
        self.checked_div(&rhs)
            .unwrap_or_else(|| panic!("rational division overflow: {self} and {rhs}"))
    }
}

impl Neg for Rational {
    type Output = Rational;

    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl AddAssign for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        *self = *self + rhs;
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::ZERO, |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        iter.fold(Rational::ZERO, |acc, x| acc + *x)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Shorthand constructor used throughout tests and fixtures.
pub fn q(numer: i128, denom: i128) -> Rational {
    Rational::new(numer, denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_form() {
        let r = Rational::new(4, -6);
        assert_eq!(r.numer(), -2);
        assert_eq!(r.denom(), 3);
        assert_eq!(r.to_string(), "-2/3");
        assert_eq!(Rational::new(6, 3).to_string(), "2");
    }

    #[test]
    fn parse_forms() {
        assert_eq!("1/3".parse::<Rational>().unwrap(), q(1, 3));
        assert_eq!("2/6".parse::<Rational>().unwrap(), q(1, 3));
        assert_eq!("7".parse::<Rational>().unwrap(), q(7, 1));
        assert_eq!(" -1/2 ".parse::<Rational>().unwrap(), q(-1, 2));
        assert!(matches!("".parse::<Rational>(), Err(RationalParseError::Empty)));
        assert!(matches!("1/0".parse::<Rational>(), Err(RationalParseError::ZeroDenominator(_))));
        assert!(matches!("0.5".parse::<Rational>(), Err(RationalParseError::InvalidInteger(_))));
        assert!(matches!("a/b".parse::<Rational>(), Err(RationalParseError::InvalidInteger(_))));
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(q(1, 3).to_decimal(12), "0.333333333333");
        assert_eq!(q(2, 3).to_decimal(12), "0.666666666667");
        assert_eq!(q(7, 6).to_decimal(4), "1.1667");
        assert_eq!(q(-1, 2).to_decimal(2), "-0.50");
        assert_eq!(q(999_999, 1_000_000).to_decimal(3), "1.000");
        assert_eq!(q(5, 1).to_decimal(0), "5");
        assert_eq!(q(-1, 1000).to_decimal(2), "0.00");
    }

    #[test]
    #[should_panic(expected = "overflow")]
    fn overflow_is_detected() {
        let big = Rational::from_integer(i128::MAX);
        let _ = big + Rational::ONE;
    }

    #[test]
    fn serde_as_string() {
        let json = serde_json::to_string(&q(3, 4)).unwrap();
        assert_eq!(json, "\"3/4\"");
        let back: Rational = serde_json::from_str(&json).unwrap();
        assert_eq!(back, q(3, 4));
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(n in -10_000i128..10_000, d in 1i128..10_000) {
            let r = Rational::new(n, d);
            let s = r.to_string();
            let back: Rational = s.parse().unwrap();
            prop_assert_eq!(back, r);
            prop_assert_eq!(back.to_string(), s);
        }

        #[test]
        fn ordering_matches_cross_multiplication(a in -1000i128..1000, b in 1i128..1000, c in -1000i128..1000, d in 1i128..1000) {
            let lhs = Rational::new(a, b);
            let rhs = Rational::new(c, d);
            prop_assert_eq!(lhs.cmp(&rhs), (a * d).cmp(&(c * b)));
        }
    }
}
