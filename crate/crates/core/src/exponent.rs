//! Exponents stored as `base + excess`.
//!
//! The admissible windows for the reverse Hölder exponents have widths of
//! order `1e-22` already for `n = 3`, far below the spacing of `f64` near 1
//! or near `n`. Every quantity that depends on how far an exponent sits above
//! its base (`β − 1`, `α − n`, `r = pβ/(β − 1)`, ...) is computed from the
//! stored excess, never from the rounded sum.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponent {
    pub base: f64,
    pub excess: f64,
}

impl Exponent {
    pub const fn new(base: f64, excess: f64) -> Self {
        Self { base, excess }
    }

    /// Rounded value `base + excess`.
    pub fn value(&self) -> f64 {
        self.base + self.excess
    }

    /// `self − x`, exact when `x == base`.
    pub fn excess_over(&self, x: f64) -> f64 {
        (self.base - x) + self.excess
    }

    /// Reciprocal `1/(base + excess)` to full precision.
    pub fn recip(&self) -> f64 {
        1.0 / self.value()
    }

    pub fn is_finite(&self) -> bool {
        self.base.is_finite() && self.excess.is_finite()
    }
}

impl From<f64> for Exponent {
    fn from(v: f64) -> Self {
        Self::new(v, 0.0)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.excess == 0.0 {
            write!(f, "{}", self.base)
        } else if self.excess > 0.0 {
            write!(f, "{}+{:e}", self.base, self.excess)
        } else {
            write!(f, "{}-{:e}", self.base, -self.excess)
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    /// Accepts plain floats (`2.5`, `1e-3`), explicit sums (`1+6e-23`,
    /// `3-1e-30`) and long decimals (`1.00000000000000000000006`), whose
    /// fractional part is kept separately from the integer part.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("not an exponent: {s:?}"));
        // explicit base±excess, skipping a leading sign and exponent markers
        let bytes = s.as_bytes();
        for i in 1..bytes.len() {
            let c = bytes[i];
            if (c == b'+' || c == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
                let base: f64 = s[..i].parse().map_err(|_| bad())?;
                let excess: f64 = s[i + 1..].parse().map_err(|_| bad())?;
                let excess = if c == b'-' { -excess } else { excess };
                return Ok(Self::new(base, excess));
            }
        }
        if s.contains(['e', 'E']) || !s.contains('.') {
            let v: f64 = s.parse().map_err(|_| bad())?;
            return Ok(Self::from(v));
        }
        let (int, frac) = s.split_once('.').ok_or_else(bad)?;
        let negative = int.starts_with('-');
        let base: f64 = match int.trim_start_matches(['-', '+']) {
            "" => 0.0,
            digits => digits.parse().map_err(|_| bad())?,
        };
        let excess: f64 = if frac.is_empty() {
            0.0
        } else {
            format!("0.{frac}").parse().map_err(|_| bad())?
        };
        if negative {
            Ok(Self::new(-base, -excess))
        } else {
            Ok(Self::new(base, excess))
        }
    }
}
