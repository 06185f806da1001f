//! Fixed-precision monetary amounts.
//!
//! A [`Money`] is an integer count of ten-thousandths of a currency unit, so
//! every value that appears in a log file (bids, item prices, reserves) round
//! trips exactly through its decimal-string form.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of fraction digits carried by [`Money`].
pub const MONEY_SCALE_DIGITS: u32 = 4;
/// Minor units per whole currency unit.
pub const MINOR_PER_UNIT: i64 = 10_i64.pow(MONEY_SCALE_DIGITS);
/// One minor unit expressed as a real amount.
pub const MINOR_UNIT: f64 = 1.0 / MINOR_PER_UNIT as f64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MoneyParseError {
    #[error("empty money string")]
    Empty,
    #[error("invalid money literal {0:?}")]
    Invalid(String),
    #[error("money literal {0:?} has more than 4 fraction digits")]
    TooPrecise(String),
    #[error("money literal {0:?} out of range")]
    Overflow(String),
}

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_minor(minor: i64) -> Self {
        Money(minor)
    }

    pub const fn minor(self) -> i64 {
        self.0
    }

    /// Rounds a real amount to the nearest minor unit (ties away from zero).
    pub fn from_f64(value: f64) -> Self {
        Money((value * MINOR_PER_UNIT as f64).round() as i64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / MINOR_PER_UNIT as f64
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.0.checked_add(other.0).map(Money)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / MINOR_PER_UNIT as u64;
        let frac = abs % MINOR_PER_UNIT as u64;
        if frac == 0 {
            return write!(f, "{sign}{whole}");
        }
        let digits = format!("{frac:04}");
        write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
    }
}

impl FromStr for Money {
    type Err = MoneyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(MoneyParseError::Empty);
        }
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (whole, frac) = match body.split_once('.') {
            Some((w, f)) => (w, f),
            None => (body, ""),
        };
        let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if (whole.is_empty() && frac.is_empty()) || !all_digits(whole) || !all_digits(frac) {
            return Err(MoneyParseError::Invalid(s.to_string()));
        }
        if frac.len() > MONEY_SCALE_DIGITS as usize {
            return Err(MoneyParseError::TooPrecise(s.to_string()));
        }
        let overflow = || MoneyParseError::Overflow(s.to_string());
        let whole: i64 = if whole.is_empty() {
            0
        } else {
            whole.parse().map_err(|_| overflow())?
        };
        let mut frac_minor: i64 = 0;
        for (i, b) in frac.bytes().enumerate() {
            frac_minor += i64::from(b - b'0') * 10_i64.pow(MONEY_SCALE_DIGITS - 1 - i as u32);
        }
        let minor = whole
            .checked_mul(MINOR_PER_UNIT)
            .and_then(|w| w.checked_add(frac_minor))
            .ok_or_else(overflow)?;
        Ok(Money(if negative { -minor } else { minor }))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_decimal_strings() {
        assert_eq!("1.25".parse::<Money>().unwrap().minor(), 12_500);
        assert_eq!("0.01".parse::<Money>().unwrap().minor(), 100);
        assert_eq!("3".parse::<Money>().unwrap().minor(), 30_000);
        assert_eq!(".5".parse::<Money>().unwrap().minor(), 5_000);
        assert_eq!("-0.0001".parse::<Money>().unwrap().minor(), -1);
    }

    #[test]
    fn rejects_bad_literals() {
        assert_eq!("".parse::<Money>(), Err(MoneyParseError::Empty));
        assert!(matches!("1.23456".parse::<Money>(), Err(MoneyParseError::TooPrecise(_))));
        assert!(matches!("1e3".parse::<Money>(), Err(MoneyParseError::Invalid(_))));
        assert!(matches!(".".parse::<Money>(), Err(MoneyParseError::Invalid(_))));
    }

    #[test]
    fn display_trims_trailing_zeros() {
        assert_eq!(Money::from_minor(12_500).to_string(), "1.25");
        assert_eq!(Money::from_minor(30_000).to_string(), "3");
        assert_eq!(Money::from_minor(-1).to_string(), "-0.0001");
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(minor in -1_000_000_000_000_i64..1_000_000_000_000) {
            let m = Money::from_minor(minor);
            prop_assert_eq!(m.to_string().parse::<Money>().unwrap(), m);
        }
    }
}
