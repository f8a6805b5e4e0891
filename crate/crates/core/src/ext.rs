//! Nonnegative reals extended with `+∞`.
//!
//! Richness estimates and Hill numbers are routinely infinite, so they are
//! carried as [`ExtendedNonnegReal`] instead of a bare `f64`. The value is
//! totally ordered with `+∞` greatest and serializes `+∞` as the string
//! `"inf"`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A finite nonnegative real or `+∞`. NaN and negative values are rejected
/// at construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtendedNonnegReal(f64);

impl ExtendedNonnegReal {
    pub const ZERO: Self = Self(0.0);
    pub const INFINITY: Self = Self(f64::INFINITY);

    /// Wraps `value`, returning `None` for NaN or negative input.
    pub fn new(value: f64) -> Option<Self> {
        if value.is_nan() || value < 0.0 {
            None
        } else {
            Some(Self(value))
        }
    }

    /// Like [`new`](Self::new) but clamps small negative round-off to zero.
    ///
    /// # Panics
    ///
    /// Panics on NaN.
    pub fn saturating(value: f64) -> Self {
        assert!(!value.is_nan(), "NaN is not an extended nonnegative real");
        Self(value.max(0.0))
    }

    pub fn finite(value: f64) -> Option<Self> {
        Self::new(value).filter(|v| v.is_finite())
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// The underlying `f64`; `+∞` maps to `f64::INFINITY`.
    pub fn value(self) -> f64 {
        self.0
    }

    /// The finite value, or `None` for `+∞`.
    pub fn to_finite(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }
}

impl Eq for ExtendedNonnegReal {}

impl PartialOrd for ExtendedNonnegReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtendedNonnegReal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add for ExtendedNonnegReal {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl Add<f64> for ExtendedNonnegReal {
    type Output = Self;

    fn add(self, rhs: f64) -> Self {
        Self::saturating(self.0 + rhs)
    }
}

/// Scaling by a finite nonnegative factor. `0 · ∞` is taken as `0`, the
/// measure-theoretic convention.
impl Mul<f64> for ExtendedNonnegReal {
    type Output = Self;

    fn mul(self, rhs: f64) -> Self {
        assert!(rhs >= 0.0, "scale factor must be nonnegative");
        if rhs == 0.0 {
            Self::ZERO
        } else {
            Self(self.0 * rhs)
        }
    }
}

impl From<ExtendedNonnegReal> for f64 {
    fn from(v: ExtendedNonnegReal) -> f64 {
        v.0
    }
}

impl fmt::Display for ExtendedNonnegReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            fmt::Display::fmt(&self.0, f)
        }
    }
}

impl Serialize for ExtendedNonnegReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_f64_or_inf(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for ExtendedNonnegReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = deserialize_f64_or_inf(d)?;
        Self::new(v)
            .ok_or_else(|| serde::de::Error::custom("expected a nonnegative number or \"inf\""))
    }
}

/// Serializes `+∞` as `"inf"`, `-∞` as `"-inf"` and finite values as numbers.
pub fn serialize_f64_or_inf<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if *v == f64::INFINITY {
        s.serialize_str("inf")
    } else if *v == f64::NEG_INFINITY {
        s.serialize_str("-inf")
    } else {
        s.serialize_f64(*v)
    }
}

pub fn deserialize_f64_or_inf<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Str(s) => match s.as_str() {
            "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
            "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
            other => other
                .parse()
                .map_err(|_| serde::de::Error::custom(format!("not a number: {other:?}"))),
        },
    }
}

/// Converts an `f64` (possibly `±∞`) to a JSON value with the `"inf"`
/// convention.
pub fn json_f64(v: f64) -> serde_json::Value {
    if v == f64::INFINITY {
        serde_json::Value::from("inf")
    } else if v == f64::NEG_INFINITY {
        serde_json::Value::from("-inf")
    } else if v.is_nan() {
        serde_json::Value::Null
    } else {
        serde_json::Value::from(v)
    }
}
