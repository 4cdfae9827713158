//! Fixed-precision ETH amounts.
//!
//! Prices are stored as signed wei (10^-18 ETH) so money arithmetic is exact;
//! analyses convert to `f64` at their own boundary via [`Eth::to_f64`].

use std::fmt;
use std::iter::Sum;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Wei per ETH: 18 fractional decimal digits.
pub const WEI_PER_ETH: i128 = 1_000_000_000_000_000_000;

/// An ETH amount held exactly in wei.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Eth(i128);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MoneyError {
    #[error("malformed decimal amount {0:?}")]
    Malformed(String),
    #[error("amount {0:?} has more than 18 fractional digits")]
    TooPrecise(String),
    #[error("amount {0:?} overflows the representable range")]
    Overflow(String),
}

impl Eth {
    pub const ZERO: Eth = Eth(0);

    pub fn from_wei(wei: i128) -> Eth {
        Eth(wei)
    }

    pub fn from_eth(eth: i128) -> Eth {
        Eth(eth * WEI_PER_ETH)
    }

    pub fn wei(self) -> i128 {
        self.0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / WEI_PER_ETH as f64
    }

    /// Nearest-wei conversion from a float ETH amount. Used by generators;
    /// parsers go through [`FromStr`] and stay exact.
    pub fn from_f64_lossy(eth: f64) -> Eth {
        Eth((eth * WEI_PER_ETH as f64).round() as i128)
    }

    pub fn checked_add(self, rhs: Eth) -> Option<Eth> {
        self.0.checked_add(rhs.0).map(Eth)
    }

    pub fn checked_mul_int(self, factor: i128) -> Option<Eth> {
        self.0.checked_mul(factor).map(Eth)
    }
}

impl Sum for Eth {
    fn sum<I: Iterator<Item = Eth>>(iter: I) -> Eth {
        iter.fold(Eth::ZERO, |acc, v| {
            acc.checked_add(v).expect("ETH sum overflow")
        })
    }
}

impl std::ops::Add for Eth {
    type Output = Eth;
    fn add(self, rhs: Eth) -> Eth {
        Eth(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Eth {
    type Output = Eth;
    fn sub(self, rhs: Eth) -> Eth {
        Eth(self.0 - rhs.0)
    }
}

impl FromStr for Eth {
    type Err = MoneyError;

    fn from_str(s: &str) -> Result<Eth, MoneyError> {
        let raw = s.trim();
        let (negative, body) = match raw.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, raw.strip_prefix('+').unwrap_or(raw)),
        };
        if body.is_empty() {
            return Err(MoneyError::Malformed(s.to_string()));
        }
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(MoneyError::Malformed(s.to_string()));
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(MoneyError::Malformed(s.to_string()));
        }
        // Wei granularity: digits beyond the 18th fractional place must be zero.
        if frac_part.len() > 18 && frac_part[18..].bytes().any(|b| b != b'0') {
            return Err(MoneyError::TooPrecise(s.to_string()));
        }
        let int_val: i128 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| MoneyError::Overflow(s.to_string()))?
        };
        let frac_digits = &frac_part[..frac_part.len().min(18)];
        let mut frac_val: i128 = if frac_digits.is_empty() {
            0
        } else {
            frac_digits
                .parse()
                .map_err(|_| MoneyError::Malformed(s.to_string()))?
        };
        for _ in frac_digits.len()..18 {
            frac_val *= 10;
        }
        let wei = int_val
            .checked_mul(WEI_PER_ETH)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(|| MoneyError::Overflow(s.to_string()))?;
        Ok(Eth(if negative { -wei } else { wei }))
    }
}

impl fmt::Display for Eth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let int = abs / WEI_PER_ETH as u128;
        let frac = abs % WEI_PER_ETH as u128;
        if frac == 0 {
            write!(f, "{sign}{int}")
        } else {
            let digits = format!("{frac:018}");
            write!(f, "{sign}{int}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl Serialize for Eth {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Eth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Eth, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
