//! Fixed-point non-negative quantities with six fractional digits.
//!
//! Weights and distances are sums of hand-chosen decimal weights; keeping them as integer
//! micro-units makes every sum exact, so symmetry and the triangle inequality hold without
//! tolerances and serialized values re-parse to the same number.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const SCALE: u64 = 1_000_000;
const FRACTION_DIGITS: usize = 6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(u64);

impl Weight {
    pub const ZERO: Weight = Weight(0);

    pub const fn from_micros(micros: u64) -> Self {
        Weight(micros)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn from_units(units: u64) -> Self {
        Weight(units * SCALE)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    /// Nearest representable weight; `None` for negative or non-finite input.
    pub fn from_f64(value: f64) -> Option<Self> {
        if !value.is_finite() || value < 0.0 {
            return None;
        }
        let micros = (value * SCALE as f64).round();
        if micros > u64::MAX as f64 {
            return None;
        }
        Some(Weight(micros as u64))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add for Weight {
    type Output = Weight;

    fn add(self, rhs: Weight) -> Weight {
        Weight(self.0 + rhs.0)
    }
}

impl AddAssign for Weight {
    fn add_assign(&mut self, rhs: Weight) {
        self.0 += rhs.0;
    }
}

impl Sum for Weight {
    fn sum<I: Iterator<Item = Weight>>(iter: I) -> Weight {
        iter.fold(Weight::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Weight> for Weight {
    fn sum<I: Iterator<Item = &'a Weight>>(iter: I) -> Weight {
        iter.copied().sum()
    }
}

/// Decimal with up to six fractional digits, trailing zeros trimmed: `3`, `0.5`, `1.000001`.
impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / SCALE;
        let frac = self.0 % SCALE;
        if frac == 0 {
            return write!(f, "{whole}");
        }
        let digits = format!("{frac:0width$}", width = FRACTION_DIGITS);
        write!(f, "{whole}.{}", digits.trim_end_matches('0'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseWeightError {
    Empty,
    Negative,
    TooPrecise,
    Invalid,
}

impl fmt::Display for ParseWeightError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            ParseWeightError::Empty => "empty number",
            ParseWeightError::Negative => "negative weight",
            ParseWeightError::TooPrecise => "more than 6 fractional digits",
            ParseWeightError::Invalid => "not a decimal number",
        };
        f.write_str(msg)
    }
}

impl std::error::Error for ParseWeightError {}

impl FromStr for Weight {
    type Err = ParseWeightError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseWeightError::Empty);
        }
        let unsigned = match s.strip_prefix('-') {
            Some(rest) => {
                // "-0" and "-0.000" are zero, anything else is negative.
                if rest.chars().all(|c| c == '0' || c == '.') && rest.contains('0') {
                    rest
                } else {
                    return Err(ParseWeightError::Negative);
                }
            }
            None => s.strip_prefix('+').unwrap_or(s),
        };
        let (whole, frac) = match unsigned.split_once('.') {
            Some((w, f)) => (w, f),
            None => (unsigned, ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return Err(ParseWeightError::Invalid);
        }
        if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseWeightError::Invalid);
        }
        let frac = frac.trim_end_matches('0');
        if frac.len() > FRACTION_DIGITS {
            return Err(ParseWeightError::TooPrecise);
        }
        let whole: u64 = if whole.is_empty() {
            0
        } else {
            whole.parse().map_err(|_| ParseWeightError::Invalid)?
        };
        let frac_micros: u64 = if frac.is_empty() {
            0
        } else {
            format!("{frac:0<width$}", width = FRACTION_DIGITS)
                .parse()
                .map_err(|_| ParseWeightError::Invalid)?
        };
        whole
            .checked_mul(SCALE)
            .and_then(|w| w.checked_add(frac_micros))
            .map(Weight)
            .ok_or(ParseWeightError::Invalid)
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Weight::from_f64(value).ok_or_else(|| serde::de::Error::custom("invalid weight"))
    }
}
