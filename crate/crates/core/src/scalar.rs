//! Arithmetic backends.
//!
//! Every object in the crate is generic over [`Scalar`]. Two backends exist:
//! [`Rational`] (arbitrary precision, comparisons are exact) and `f64`.
//! Quantities that are irrational in general (square roots, fractional powers)
//! are routed through `f64` and converted back, so in rational mode they are
//! exact binary fractions of the correctly rounded float.

use std::fmt::Debug;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Arithmetic mode selector used by the harness and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rational,
    Float,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rational" | "exact" => Ok(Mode::Rational),
            "float" | "f64" => Ok(Mode::Float),
            other => Err(Error::InvalidSpec(format!("unknown arithmetic mode {other:?}"))),
        }
    }
}

pub trait Scalar: Signed + Clone + Debug + PartialOrd + Send + Sync + 'static {
    const MODE: Mode;

    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn from_ratio(num: i64, den: i64) -> Self;

    /// Parses `"p/q"`, integers and decimal strings (with optional exponent).
    fn parse_text(text: &str) -> Result<Self>;

    /// Canonical text form; `parse_text(repr(x)) == x`.
    fn repr(&self) -> String;

    /// Relative tolerance used by equality checks in this mode.
    fn default_tolerance() -> f64 {
        match Self::MODE {
            Mode::Rational => 0.0,
            Mode::Float => 1e-12,
        }
    }

    fn from_i64(n: i64) -> Self {
        Self::from_ratio(n, 1)
    }
}

impl Scalar for f64 {
    const MODE: Mode = Mode::Float;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn parse_text(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: f64 = n.trim().parse().map_err(|_| bad_number(text))?;
            let d: f64 = d.trim().parse().map_err(|_| bad_number(text))?;
            if d == 0.0 {
                return Err(bad_number(text));
            }
            return Ok(n / d);
        }
        let v: f64 = t.parse().map_err(|_| bad_number(text))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad_number(text))
        }
    }

    fn repr(&self) -> String {
        format!("{self:?}")
    }
}

impl Scalar for Rational {
    const MODE: Mode = Mode::Rational;

    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite float")
    }

    fn to_f64(&self) -> f64 {
        // `ToPrimitive` for big rationals rounds correctly and handles huge
        // numerators/denominators.
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            if self.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        })
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn parse_text(text: &str) -> Result<Self> {
        parse_exact(text.trim()).ok_or_else(|| bad_number(text))
    }

    fn repr(&self) -> String {
        if self.denom().is_one() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }
}

fn bad_number(text: &str) -> Error {
    Error::InvalidSpec(format!("cannot parse number {text:?}"))
}

fn parse_exact(t: &str) -> Option<Rational> {
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_exact(n.trim())?;
        let d = parse_exact(d.trim())?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(&all_digits).ok()?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Some(value)
}

/// `x^e`, exact whenever `e` is an integer, otherwise through `f64`.
///
/// `x` must be nonnegative when `e` is fractional. `0^0 = 1`.
pub fn pow<S: Scalar>(x: &S, e: f64) -> S {
    if e == 0.0 {
        return S::one();
    }
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        let n = e.abs() as u32;
        let mut acc = S::one();
        for _ in 0..n {
            acc = acc * x.clone();
        }
        if e < 0.0 {
            if acc.is_zero() {
                return S::from_f64(f64::INFINITY.min(f64::MAX));
            }
            acc = S::one() / acc;
        }
        return acc;
    }
    S::from_f64(x.to_f64().powf(e))
}

/// `2^k`, exact in both modes.
pub fn pow2<S: Scalar>(k: i32) -> S {
    if k >= 0 {
        pow(&S::from_i64(2), k as f64)
    } else {
        S::one() / pow(&S::from_i64(2), (-k) as f64)
    }
}

/// Square root through `f64` (exact for perfect squares of dyadic rationals).
pub fn sqrt<S: Scalar>(x: &S) -> S {
    S::from_f64(x.to_f64().max(0.0).sqrt())
}

/// Mode-aware closeness: exact equality at tolerance 0, otherwise
/// `|a - b| <= tol * max(|a|, |b|, 1)`.
pub fn close<S: Scalar>(a: &S, b: &S, tol: f64) -> bool {
    if tol == 0.0 {
        return a == b;
    }
    let (x, y) = (a.to_f64(), b.to_f64());
    (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0)
}

/// `a <= b` up to the relative tolerance.
pub fn le_tol<S: Scalar>(a: &S, b: &S, tol: f64) -> bool {
    if a <= b {
        return true;
    }
    tol > 0.0 && close(a, b, tol)
}

pub fn max_of<S: Scalar>(a: S, b: S) -> S {
    if b > a {
        b
    } else {
        a
    }
}

pub fn min_of<S: Scalar>(a: S, b: S) -> S {
    if b < a {
        b
    } else {
        a
    }
}

/// Serialized scalar: accepts JSON strings (`"3/8"`, `"0.25"`) and numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberText {
    Text(String),
    Number(serde_json::Number),
}

impl NumberText {
    pub fn parse<S: Scalar>(&self) -> Result<S> {
        match self {
            NumberText::Text(t) => S::parse_text(t),
            NumberText::Number(n) => S::parse_text(&n.to_string()),
        }
    }

    pub fn from_scalar<S: Scalar>(x: &S) -> Self {
        NumberText::Text(x.repr())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn parses_exact_decimals_and_fractions() {
        assert_eq!(Rational::parse_text("0.125").unwrap(), q(1, 8));
        assert_eq!(Rational::parse_text("-1.5e-1").unwrap(), q(-3, 20));
        assert_eq!(Rational::parse_text("2/3").unwrap(), q(2, 3));
        assert_eq!(Rational::parse_text("1").unwrap(), q(1, 1));
        assert_eq!(Rational::parse_text(".5").unwrap(), q(1, 2));
        assert!(Rational::parse_text("1/0").is_err());
        assert!(Rational::parse_text("abc").is_err());
        assert!(Rational::parse_text("").is_err());
        assert_eq!(f64::parse_text("1/4").unwrap(), 0.25);
    }

    #[test]
    fn repr_round_trips() {
        for x in [q(2, 3), q(-7, 1), q(0, 1), q(5, 1024)] {
            assert_eq!(Rational::parse_text(&x.repr()).unwrap(), x);
        }
        for x in [0.1_f64, -3.25, 1e-300, 2.0 / 3.0] {
            assert_eq!(f64::parse_text(&x.repr()).unwrap(), x);
        }
    }

    #[test]
    fn integer_powers_are_exact() {
        assert_eq!(pow(&q(2, 3), 3.0), q(8, 27));
        assert_eq!(pow(&q(2, 3), -2.0), q(9, 4));
        assert_eq!(pow(&q(0, 1), 0.0), q(1, 1));
        assert_eq!(pow2::<Rational>(-3), q(1, 8));
        assert_eq!(sqrt(&q(9, 16)), q(3, 4));
    }

    #[test]
    fn closeness_is_exact_at_zero_tolerance() {
        assert!(close(&q(1, 3), &q(1, 3), 0.0));
        assert!(!close(&q(1, 3), &q(333_333, 1_000_000), 0.0));
        assert!(close(&(0.1 + 0.2), &0.3, 1e-12));
    }
}
