//! Exact rational helpers and the `"p/q"` string encoding used by every file format.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse rational from {input:?}")]
pub struct ParseRationalError {
    pub input: String,
}

/// Shorthand for small literals in code and tests.
pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// Parses `"p/q"` or a bare integer `"p"`.
pub fn parse_rational(input: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError {
        input: input.to_string(),
    };
    let s = input.trim();
    let (numer, denom) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let numer: BigInt = numer.parse().map_err(|_| err())?;
    let denom: BigInt = denom.parse().map_err(|_| err())?;
    if denom.is_zero() {
        return Err(err());
    }
    Ok(Rational::new(numer, denom))
}

/// Always emits the reduced `"p/q"` form, including `"0/1"` and `"3/1"`.
pub fn format_rational(value: &Rational) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

/// Display adapter for `p/q`.
pub struct Pq<'a>(pub &'a Rational);

impl fmt::Display for Pq<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

pub fn to_f64(value: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn min_rational<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if a <= b {
        a
    } else {
        b
    }
}

/// Exact ∫_a^b |c - 2t| dt.
pub fn integral_abs_affine_reversal(a: &Rational, b: &Rational, c: &Rational) -> Rational {
    // antiderivative of (c - 2t) is c t - t^2
    let prim = |t: &Rational| c * t - t * t;
    let root = c / int(2);
    if &root <= a || &root >= b {
        (prim(b) - prim(a)).abs()
    } else {
        (prim(&root) - prim(a)).abs() + (prim(b) - prim(&root)).abs()
    }
}

pub fn lcm_of_denominators<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    use num_integer::Integer;
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

pub mod serde_pq {
    //! `#[serde(with = "serde_pq")]` for a single rational.
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

pub mod serde_pq_vec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(values.iter().map(format_rational))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| parse_rational(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_rational("3/7").unwrap(), rat(3, 7));
        assert_eq!(parse_rational(" 6/14 ").unwrap(), rat(3, 7));
        assert_eq!(parse_rational("5").unwrap(), int(5));
        assert_eq!(parse_rational("-1/2").unwrap(), rat(-1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert_eq!(format_rational(&int(0)), "0/1");
        assert_eq!(format_rational(&rat(6, 14)), "3/7");
    }

    #[test]
    fn reversal_integral_matches_riemann_sum() {
        let cases = [(rat(0, 1), rat(1, 1), rat(1, 1)), (rat(1, 4), rat(3, 4), rat(5, 2)), (rat(0, 1), rat(1, 3), rat(-1, 5))];
        for (a, b, c) in cases {
            let exact = to_f64(&integral_abs_affine_reversal(&a, &b, &c));
            let (af, bf, cf) = (to_f64(&a), to_f64(&b), to_f64(&c));
            let n = 200_000;
            let h = (bf - af) / n as f64;
            let riemann: f64 = (0..n)
                .map(|i| (cf - 2.0 * (af + (i as f64 + 0.5) * h)).abs() * h)
                .sum();
            assert!((exact - riemann).abs() < 1e-8, "{exact} vs {riemann}");
        }
    }
}
