//! Numeric abstractions shared by the embedding and metrics code.
//!
//! Embeddings are generic over any floating type ([`EmbeddingScalar`]);
//! rate arithmetic is generic over [`RateScalar`], which is implemented for
//! the float types and for exact rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio, Rational64};
use num_traits::{Float, FromPrimitive, Num, One, Signed, ToPrimitive, Zero};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Element type of an embedding vector.
pub trait EmbeddingScalar:
    Float + Sum + FromPrimitive + Debug + Display + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Tolerance on `|‖v‖₂ − 1|` for a vector to count as normalized.
    fn norm_tolerance() -> Self;
}

impl EmbeddingScalar for f64 {
    fn norm_tolerance() -> Self {
        1e-6
    }
}

impl EmbeddingScalar for f32 {
    fn norm_tolerance() -> Self {
        1e-5
    }
}

/// Value type for percentages and reductions.
pub trait RateScalar: Clone + PartialOrd + Num + Signed + Debug + Send + Sync + 'static {
    /// `numerator / denominator` (denominator > 0).
    fn from_ratio(numerator: u64, denominator: u64) -> Self;

    /// Parses a plain decimal such as `"36.35"`.
    fn from_decimal(text: &str) -> Option<Self>;

    fn to_f64(&self) -> f64;

    /// Exact rational value of `self`; for binary floats this is the exact
    /// value of the stored bits.
    fn to_exact(&self) -> BigRational;

    /// Lossless textual form used alongside the rendered value.
    fn exact_repr(&self) -> String;

    fn hundred() -> Self {
        Self::from_ratio(100, 1)
    }
}

macro_rules! float_rate {
    ($t:ty) => {
        impl RateScalar for $t {
            fn from_ratio(numerator: u64, denominator: u64) -> Self {
                numerator as $t / denominator as $t
            }

            fn from_decimal(text: &str) -> Option<Self> {
                <$t>::from_str(text.trim()).ok().filter(|v| v.is_finite())
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn to_exact(&self) -> BigRational {
                BigRational::from_float(*self).unwrap_or_else(BigRational::zero)
            }

            fn exact_repr(&self) -> String {
                format!("{}", self)
            }
        }
    };
}

float_rate!(f64);
float_rate!(f32);

fn parse_decimal_parts(text: &str) -> Option<(BigInt, BigInt)> {
    let text = text.trim();
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut numer: BigInt = format!("0{int_part}{frac_part}").parse().ok()?;
    if negative {
        numer = -numer;
    }
    let denom = num_traits::pow(BigInt::from(10u32), frac_part.len());
    Some((numer, denom))
}

impl RateScalar for BigRational {
    fn from_ratio(numerator: u64, denominator: u64) -> Self {
        Ratio::new(BigInt::from(numerator), BigInt::from(denominator))
    }

    fn from_decimal(text: &str) -> Option<Self> {
        let (n, d) = parse_decimal_parts(text)?;
        Some(Ratio::new(n, d))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn to_exact(&self) -> BigRational {
        self.clone()
    }

    fn exact_repr(&self) -> String {
        self.to_string()
    }
}

impl RateScalar for Rational64 {
    fn from_ratio(numerator: u64, denominator: u64) -> Self {
        let g = numerator.gcd(&denominator);
        Ratio::new((numerator / g) as i64, (denominator / g) as i64)
    }

    fn from_decimal(text: &str) -> Option<Self> {
        let (n, d) = parse_decimal_parts(text)?;
        Some(Ratio::new(n.to_i64()?, d.to_i64()?))
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }

    fn to_exact(&self) -> BigRational {
        Ratio::new(BigInt::from(*self.numer()), BigInt::from(*self.denom()))
    }

    fn exact_repr(&self) -> String {
        self.to_string()
    }
}

/// Formats `value` with two decimals, rounding half to even on the exact
/// value.
pub fn format_fixed2<T: RateScalar>(value: &T) -> String {
    let scaled = value.to_exact() * BigRational::from_integer(BigInt::from(100));
    let floor = scaled.floor();
    let frac = &scaled - &floor;
    let half = Ratio::new(BigInt::one(), BigInt::from(2));
    let mut cents = floor.to_integer();
    if frac > half || (frac == half && cents.is_odd()) {
        cents += 1;
    }
    let negative = cents.is_negative();
    let magnitude = cents.abs();
    let (whole, rem) = magnitude.div_rem(&BigInt::from(100));
    format!("{}{}.{:02}", if negative { "-" } else { "" }, whole, rem.to_u32().unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_even_on_exact_values() {
        let r = |s: &str| Rational64::from_decimal(s).unwrap();
        assert_eq!(format_fixed2(&r("0.125")), "0.12");
        assert_eq!(format_fixed2(&r("0.135")), "0.14");
        assert_eq!(format_fixed2(&r("-0.125")), "-0.12");
        assert_eq!(format_fixed2(&r("-0.001")), "0.00");
        assert_eq!(format_fixed2(&r("34.9")), "34.90");
        assert_eq!(format_fixed2(&Rational64::from_ratio(2, 7)), "0.29");
    }

    #[test]
    fn floats_round_on_their_exact_binary_value() {
        // 36.35 - 1.45 is not exactly 34.9 in binary but renders as such.
        assert_eq!(format_fixed2(&(36.35f64 - 1.45f64)), "34.90");
        // 0.125 is exact in binary, so the tie goes to even.
        assert_eq!(format_fixed2(&0.125f64), "0.12");
        assert_eq!(format_fixed2(&100.0f64), "100.00");
    }

    #[test]
    fn decimal_parsing() {
        assert_eq!(BigRational::from_decimal("36.35").unwrap().to_string(), "727/20");
        assert_eq!(Rational64::from_decimal("-1.5").unwrap(), Ratio::new(-3, 2));
        assert_eq!(Rational64::from_decimal("7").unwrap(), Ratio::from_integer(7));
        assert!(Rational64::from_decimal("1.2.3").is_none());
        assert!(Rational64::from_decimal("").is_none());
        assert!(f64::from_decimal("nan").is_none());
    }
}
