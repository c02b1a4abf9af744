//! Money in integer minor units and fractional fees in basis points.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Amount in minor currency units (single currency).
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money(pub u64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn minor(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, rhs: Money) -> Money {
        Money(self.0.saturating_sub(rhs.0))
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

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

/// A fraction in [0, 1] held as basis points (1/10000).
///
/// Serialized as a decimal fraction (`0.2`), stored exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(u32);

impl Fraction {
    pub const ONE_BP: u32 = 10_000;

    pub fn from_basis_points(bp: u32) -> Option<Self> {
        (bp <= Self::ONE_BP).then_some(Fraction(bp))
    }

    /// Rounds to the nearest basis point. `None` outside [0, 1] or non-finite.
    pub fn from_f64(f: f64) -> Option<Self> {
        if !f.is_finite() || !(0.0..=1.0).contains(&f) {
            return None;
        }
        Self::from_basis_points((f * Self::ONE_BP as f64).round() as u32)
    }

    pub fn basis_points(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / Self::ONE_BP as f64
    }

    /// `amount × self`, rounded half-up to whole minor units.
    pub fn apply_half_up(self, amount: Money) -> Money {
        let num = amount.0 as u128 * self.0 as u128;
        let den = Self::ONE_BP as u128;
        Money(((num * 2 + den) / (den * 2)) as u64)
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = f64::deserialize(d)?;
        Fraction::from_f64(f)
            .ok_or_else(|| serde::de::Error::custom(format!("fraction {f} outside [0, 1]")))
    }
}
