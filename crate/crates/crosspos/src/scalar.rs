//! Dual-mode coefficient arithmetic.
//!
//! The polynomial algebra runs either over exact rationals (`BigRational`)
//! or over `f64`. Exact mode backs the algebraic oracles (ideal reduction,
//! round trips, moment identities); float mode backs the SDP and generator
//! pipeline. Every float comparison in the crate takes an explicit tolerance.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

/// Coefficient field for the polynomial layer.
pub trait Coeff:
    Clone
    + PartialEq
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Zero
    + One
{
    fn from_int(v: i64) -> Self;
    /// Rational p/q; used by fixtures and tests.
    fn from_ratio(num: i64, den: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn abs_f64(&self) -> f64 {
        self.to_f64().abs()
    }
}

impl Coeff for f64 {
    fn from_int(v: i64) -> Self {
        v as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Coeff for BigRational {
    fn from_int(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// A scalar as it appears in JSON files: a plain number or a `"p/q"` string.
#[derive(Clone, Debug, PartialEq)]
pub enum Scalar {
    Rational(BigRational),
    Float(f64),
}

impl Scalar {
    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Rational(r) => Coeff::to_f64(r),
            Scalar::Float(x) => *x,
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Scalar::Rational(r) => Some(r),
            Scalar::Float(_) => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Rational(r) => write!(f, "{}", r),
            Scalar::Float(x) => write!(f, "{:.16e}", x),
        }
    }
}

/// Parses `"p/q"` or `"p"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n = BigInt::from_str(num.trim()).map_err(|e| format!("bad numerator {num:?}: {e}"))?;
        let d = BigInt::from_str(den.trim()).map_err(|e| format!("bad denominator {den:?}: {e}"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        Ok(BigRational::new(n, d))
    } else {
        let n = BigInt::from_str(s).map_err(|e| format!("bad integer {s:?}: {e}"))?;
        Ok(BigRational::from_integer(n))
    }
}

/// Renders a rational as `"p/q"` (or `"p"` when integral).
pub fn rational_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl serde::Serialize for Scalar {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            Scalar::Rational(r) => ser.serialize_str(&rational_to_string(r)),
            Scalar::Float(x) => ser.serialize_f64(*x),
        }
    }
}

impl<'de> serde::Deserialize<'de> for Scalar {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let v = serde_json::Value::deserialize(de)?;
        match v {
            serde_json::Value::String(s) => parse_rational(&s)
                .map(Scalar::Rational)
                .map_err(D::Error::custom),
            serde_json::Value::Number(num) => num
                .as_f64()
                .map(Scalar::Float)
                .ok_or_else(|| D::Error::custom("non-finite number")),
            other => Err(D::Error::custom(format!(
                "expected number or \"p/q\" string, got {other}"
            ))),
        }
    }
}

/// Double factorial with the usual conventions `0!! = (-1)!! = 1`.
pub fn double_factorial(k: i64) -> BigRational {
    assert!(k >= -1, "double factorial undefined for {k}");
    let mut acc = BigInt::one();
    let mut m = k;
    while m > 1 {
        acc *= BigInt::from(m);
        m -= 2;
    }
    BigRational::from_integer(acc)
}

/// Binomial coefficient as an exact integer.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Signed absolute value used when choosing exact pivots.
pub fn rat_abs(r: &BigRational) -> BigRational {
    r.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_round_trip() {
        let r = parse_rational("-21/2").unwrap();
        assert_eq!(rational_to_string(&r), "-21/2");
        assert_eq!(Coeff::to_f64(&r), -10.5);
        let i = parse_rational("7").unwrap();
        assert_eq!(rational_to_string(&i), "7");
    }

    #[test]
    fn double_factorial_conventions() {
        assert_eq!(double_factorial(-1), BigRational::from_int(1));
        assert_eq!(double_factorial(0), BigRational::from_int(1));
        assert_eq!(double_factorial(5), BigRational::from_int(15));
        assert_eq!(double_factorial(6), BigRational::from_int(48));
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(2 * 3 - 2, 3 - 1), 6); // deg V_C(J_3)
        assert_eq!(binomial(18, 9), 48620);
    }
}
