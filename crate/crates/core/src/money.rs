//! Exact currency amounts.
//!
//! Every monetary quantity in the mechanisms (bids, costs, cost-shares,
//! payments) is a [`Money`]: a reduced rational number with arbitrary
//! precision. Values that fit in 128-bit integers are kept inline and only
//! spill to heap-allocated big integers when an operation would overflow,
//! so the common case stays cheap while equality and ordering remain exact.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{CheckedAdd, CheckedMul, CheckedSub, One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// An exact rational amount of money, always in lowest terms with a
/// positive denominator.
#[derive(Clone)]
pub struct Money(Repr);

#[derive(Clone)]
enum Repr {
    Small(Ratio<i128>),
    // Only used when the reduced value does not fit `Small`.
    Big(BigRational),
}

impl Money {
    pub fn zero() -> Self {
        Money(Repr::Small(Ratio::from_integer(0)))
    }

    pub fn from_integer(n: i64) -> Self {
        Money(Repr::Small(Ratio::from_integer(n as i128)))
    }

    /// `numer / denom`, reduced. Panics if `denom` is zero.
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Money(Repr::Small(Ratio::new(numer as i128, denom as i128)))
    }

    /// Amount expressed in millionths, e.g. `from_micros(2_510_000)` is 2.51.
    pub fn from_micros(micros: i64) -> Self {
        Money::new(micros, 1_000_000)
    }

    pub fn from_big(value: BigRational) -> Self {
        match (value.numer().to_i128(), value.denom().to_i128()) {
            (Some(n), Some(d)) => Money(Repr::Small(Ratio::new_raw(n, d))),
            _ => Money(Repr::Big(value)),
        }
    }

    pub fn to_big(&self) -> BigRational {
        match &self.0 {
            Repr::Small(r) => {
                BigRational::new_raw(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
            }
            Repr::Big(b) => b.clone(),
        }
    }

    pub fn numer(&self) -> BigInt {
        match &self.0 {
            Repr::Small(r) => BigInt::from(*r.numer()),
            Repr::Big(b) => b.numer().clone(),
        }
    }

    pub fn denom(&self) -> BigInt {
        match &self.0 {
            Repr::Small(r) => BigInt::from(*r.denom()),
            Repr::Big(b) => b.denom().clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.0 {
            Repr::Small(r) => r.is_zero(),
            Repr::Big(b) => b.is_zero(),
        }
    }

    pub fn is_positive(&self) -> bool {
        match &self.0 {
            Repr::Small(r) => r.is_positive(),
            Repr::Big(b) => b.is_positive(),
        }
    }

    pub fn is_negative(&self) -> bool {
        match &self.0 {
            Repr::Small(r) => r.is_negative(),
            Repr::Big(b) => b.is_negative(),
        }
    }

    /// Exact division by a positive integer count.
    pub fn div_int(&self, n: usize) -> Money {
        assert!(n > 0, "division by zero count");
        if let Repr::Small(r) = &self.0 {
            if let Ok(n) = i128::try_from(n) {
                if let Some(d) = r.denom().checked_mul(&n) {
                    return Money(Repr::Small(Ratio::new(*r.numer(), d)));
                }
            }
        }
        Money::from_big(self.to_big() / BigRational::from_integer(BigInt::from(n)))
    }

    /// Exact multiplication by a non-negative integer count.
    pub fn mul_int(&self, n: usize) -> Money {
        if let Repr::Small(r) = &self.0 {
            if let Ok(n) = i128::try_from(n) {
                if let Some(x) = r.checked_mul(&Ratio::from_integer(n)) {
                    return Money(Repr::Small(x));
                }
            }
        }
        Money::from_big(self.to_big() * BigRational::from_integer(BigInt::from(n)))
    }

    /// Exact quotient, `None` for a zero divisor.
    pub fn checked_div(&self, rhs: &Money) -> Option<Money> {
        if rhs.is_zero() {
            return None;
        }
        Some(Money::from_big(self.to_big() / rhs.to_big()))
    }

    pub fn abs(&self) -> Money {
        if self.is_negative() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    pub fn max(self, other: Money) -> Money {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Money) -> Money {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn to_f64(&self) -> f64 {
        match &self.0 {
            Repr::Small(r) => *r.numer() as f64 / *r.denom() as f64,
            Repr::Big(b) => b.to_f64().unwrap_or(f64::NAN),
        }
    }

    /// Renders with exactly `digits` fractional digits, rounding half to even.
    pub fn to_fixed(&self, digits: u32) -> String {
        let scale = BigInt::from(10u32).pow(digits);
        let scaled = self.to_big() * BigRational::from_integer(scale);
        let rounded = round_half_even(&scaled);
        format_scaled(&rounded, digits)
    }

    /// `true` when the value has a terminating decimal expansion.
    pub fn is_decimal(&self) -> bool {
        let mut d = self.denom();
        let two = BigInt::from(2u8);
        let five = BigInt::from(5u8);
        while d.is_even() {
            d /= &two;
        }
        while (&d % &five).is_zero() {
            d /= &five;
        }
        d.is_one()
    }

    fn exact_decimal(&self) -> String {
        let mut digits = 0u32;
        let ten = BigRational::from_integer(BigInt::from(10u8));
        let mut scaled = self.to_big();
        while !scaled.is_integer() {
            scaled = scaled * &ten;
            digits += 1;
        }
        format_scaled(&scaled.to_integer(), digits)
    }
}

fn round_half_even(x: &BigRational) -> BigInt {
    let floor = x.floor().to_integer();
    let frac = x - BigRational::from_integer(floor.clone());
    let half = BigRational::new(BigInt::one(), BigInt::from(2u8));
    match frac.cmp(&half) {
        Ordering::Less => floor,
        Ordering::Greater => floor + 1,
        Ordering::Equal => {
            if floor.is_even() {
                floor
            } else {
                floor + 1
            }
        }
    }
}

/// Formats `value / 10^digits` as a plain decimal string.
pub(crate) fn format_scaled(value: &BigInt, digits: u32) -> String {
    let negative = value.sign() == Sign::Minus;
    let magnitude = value.abs().to_string();
    let digits = digits as usize;
    let body = if digits == 0 {
        magnitude
    } else {
        let padded = format!("{:0>width$}", magnitude, width = digits + 1);
        let (int, frac) = padded.split_at(padded.len() - digits);
        format!("{int}.{frac}")
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

impl Default for Money {
    fn default() -> Self {
        Money::zero()
    }
}

impl PartialEq for Money {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => a == b,
            (Repr::Big(a), Repr::Big(b)) => a == b,
            // canonical form: a value representable as Small is never Big
            _ => false,
        }
    }
}

impl Eq for Money {}

impl Hash for Money {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match &self.0 {
            Repr::Small(r) => {
                0u8.hash(state);
                r.numer().hash(state);
                r.denom().hash(state);
            }
            Repr::Big(b) => {
                1u8.hash(state);
                b.numer().hash(state);
                b.denom().hash(state);
            }
        }
    }
}

impl PartialOrd for Money {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Money {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => a.cmp(b),
            _ => self.to_big().cmp(&other.to_big()),
        }
    }
}

impl Add for &Money {
    type Output = Money;
    fn add(self, rhs: &Money) -> Money {
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &rhs.0) {
            if let Some(x) = a.checked_add(b) {
                return Money(Repr::Small(x));
            }
        }
        Money::from_big(self.to_big() + rhs.to_big())
    }
}

impl Sub for &Money {
    type Output = Money;
    fn sub(self, rhs: &Money) -> Money {
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &rhs.0) {
            if let Some(x) = a.checked_sub(b) {
                return Money(Repr::Small(x));
            }
        }
        Money::from_big(self.to_big() - rhs.to_big())
    }
}

impl Mul for &Money {
    type Output = Money;
    fn mul(self, rhs: &Money) -> Money {
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &rhs.0) {
            if let Some(x) = a.checked_mul(b) {
                return Money(Repr::Small(x));
            }
        }
        Money::from_big(self.to_big() * rhs.to_big())
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl $tr for Money {
            type Output = Money;
            fn $method(self, rhs: Money) -> Money {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Money> for Money {
            type Output = Money;
            fn $method(self, rhs: &Money) -> Money {
                (&self).$method(rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl AddAssign<&Money> for Money {
    fn add_assign(&mut self, rhs: &Money) {
        *self = &*self + rhs;
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        *self = &*self + &rhs;
    }
}

impl SubAssign<&Money> for Money {
    fn sub_assign(&mut self, rhs: &Money) {
        *self = &*self - rhs;
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        match self.0 {
            Repr::Small(r) => match r.numer().checked_neg() {
                Some(n) => Money(Repr::Small(Ratio::new_raw(n, *r.denom()))),
                None => Money::from_big(-Money(Repr::Small(r)).to_big()),
            },
            Repr::Big(b) => Money::from_big(-b),
        }
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::zero(), |acc, x| &acc + &x)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.fold(Money::zero(), |acc, x| &acc + x)
    }
}

impl From<i64> for Money {
    fn from(n: i64) -> Self {
        Money::from_integer(n)
    }
}

/// Canonical rendering: integers as `7`, terminating decimals as `2.51`,
/// anything else as a reduced fraction `100/3`.
impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom().is_one() {
            write!(f, "{}", self.numer())
        } else if self.is_decimal() {
            f.write_str(&self.exact_decimal())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Money({self})")
    }
}

impl FromStr for Money {
    type Err = Error;

    /// Accepts `-12`, `2.51`, `.5`, and `100/3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::MoneyParse(s.to_string());
        let text = s.trim();
        if let Some((n, d)) = text.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            return Ok(Money::from_big(BigRational::new(n, d)));
        }
        let (negative, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text.strip_prefix('+').unwrap_or(text)),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if (int.is_empty() && frac.is_empty())
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
        let scale = BigInt::from(10u8).pow(frac.len() as u32);
        let value = BigRational::new(if negative { -digits } else { digits }, scale);
        Ok(Money::from_big(value))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MoneyVisitor;

        impl Visitor<'_> for MoneyVisitor {
            type Value = Money;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a decimal string, a fraction string, or an integer")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Money, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Money, E> {
                Ok(Money::from_integer(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Money, E> {
                Ok(Money::from_big(BigRational::from_integer(BigInt::from(v))))
            }

            fn visit_f64<E: de::Error>(self, _: f64) -> Result<Money, E> {
                Err(E::custom(
                    "floating-point money is not accepted; quote it as a decimal string",
                ))
            }
        }

        deserializer.deserialize_any(MoneyVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(s: &str) -> Money {
        s.parse().unwrap()
    }

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!(m("2.51"), Money::new(251, 100));
        assert_eq!(m("-0.5"), Money::new(-1, 2));
        assert_eq!(m(".25"), Money::new(1, 4));
        assert_eq!(m("100/3"), Money::new(100, 3));
        assert_eq!(m("6/4"), Money::new(3, 2));
        assert!("".parse::<Money>().is_err());
        assert!("1.2.3".parse::<Money>().is_err());
        assert!("1/0".parse::<Money>().is_err());
        assert!("abc".parse::<Money>().is_err());
    }

    #[test]
    fn display_is_canonical() {
        assert_eq!(Money::new(251, 100).to_string(), "2.51");
        assert_eq!(Money::new(100, 3).to_string(), "100/3");
        assert_eq!(Money::from_integer(-7).to_string(), "-7");
        assert_eq!(Money::new(-1, 8).to_string(), "-0.125");
    }

    #[test]
    fn fixed_rendering_rounds_half_even() {
        assert_eq!(Money::new(1, 8).to_fixed(2), "0.12");
        assert_eq!(Money::new(3, 8).to_fixed(2), "0.38");
        assert_eq!(Money::new(5, 2).to_fixed(0), "2");
        assert_eq!(Money::new(7, 2).to_fixed(0), "4");
        assert_eq!(Money::new(100, 3).to_fixed(9), "33.333333333");
        assert_eq!(Money::new(-1, 3).to_fixed(3), "-0.333");
        assert_eq!(Money::new(-1, 2000).to_fixed(3), "0.000");
        assert_eq!(Money::zero().to_fixed(9), "0.000000000");
    }

    #[test]
    fn spills_to_big_and_back() {
        let huge = Money::from_big(BigRational::from_integer(BigInt::from(i128::MAX)));
        let bigger = &huge + &huge;
        assert!(matches!(bigger.0, Repr::Big(_)));
        let back = &bigger - &huge;
        assert!(matches!(back.0, Repr::Small(_)));
        assert_eq!(back, huge);
        assert!(bigger > huge);
    }

    #[test]
    fn div_int_is_exact() {
        let c = Money::from_integer(100);
        let share = c.div_int(3);
        assert_eq!(share.mul_int(3), c);
    }

    #[test]
    fn serde_round_trip() {
        let v = Money::new(100, 3);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, "\"100/3\"");
        let back: Money = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        let int: Money = serde_json::from_str("42").unwrap();
        assert_eq!(int, Money::from_integer(42));
        assert!(serde_json::from_str::<Money>("2.51").is_err());
    }

    fn money() -> impl Strategy<Value = Money> {
        (any::<i64>(), 1i64..1_000_000_000).prop_map(|(n, d)| Money::new(n, d))
    }

    proptest! {
        #[test]
        fn add_then_sub_is_identity(a in money(), b in money()) {
            prop_assert_eq!(&(&a + &b) - &b, a);
        }

        #[test]
        fn decimal_render_parse_round_trip(units in any::<i64>(), digits in 0u32..12) {
            let v = Money::from_big(BigRational::new(BigInt::from(units), BigInt::from(10u8).pow(digits)));
            let text = v.to_string();
            prop_assert_eq!(text.parse::<Money>().unwrap(), v.clone());
            prop_assert_eq!(v.to_fixed(digits).parse::<Money>().unwrap(), v);
        }

        #[test]
        fn ordering_matches_big_rationals(a in money(), b in money()) {
            prop_assert_eq!(a.cmp(&b), a.to_big().cmp(&b.to_big()));
        }
    }
}
