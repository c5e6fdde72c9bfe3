//! Numeric types the oracle can evaluate in.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive};
use serde_json::Value;

/// A probability scalar: a signed field with exact small-integer embedding.
pub trait Prob: Clone + Debug + PartialEq + PartialOrd + Num + Signed + 'static {
    fn from_i64(n: i64) -> Self;

    fn ratio(num: u64, den: u64) -> Self {
        Self::from_i64(num as i64) / Self::from_i64(den as i64)
    }

    fn to_f64(&self) -> f64;

    /// JSON encoding used by the SCM document; must round-trip exactly.
    fn to_json(&self) -> Value;

    fn from_json(v: &Value) -> Option<Self>;

    /// Tolerance used when checking that a table sums to one.
    fn normalization_slack() -> f64;
}

impl Prob for f64 {
    fn from_i64(n: i64) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn to_json(&self) -> Value {
        Value::from(*self)
    }

    fn from_json(v: &Value) -> Option<Self> {
        v.as_f64()
    }

    fn normalization_slack() -> f64 {
        1e-12
    }
}

impl Prob for f32 {
    fn from_i64(n: i64) -> Self {
        n as f32
    }

    fn to_f64(&self) -> f64 {
        *self as f64
    }

    fn to_json(&self) -> Value {
        Value::from(*self)
    }

    fn from_json(v: &Value) -> Option<Self> {
        v.as_f64().map(|x| x as f32)
    }

    fn normalization_slack() -> f64 {
        1e-5
    }
}

impl Prob for BigRational {
    fn from_i64(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn to_json(&self) -> Value {
        Value::from(self.to_string())
    }

    fn from_json(v: &Value) -> Option<Self> {
        v.as_str()?.parse().ok()
    }

    fn normalization_slack() -> f64 {
        0.0
    }
}
