//! Working precisions and the scalar abstraction the solver is generic over.

use std::fmt;
use std::iter::Sum;
use std::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Hardware floating-point format in which a solve stores and computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WorkingPrecision {
    #[serde(rename = "b32")]
    Binary32,
    #[serde(rename = "b64")]
    Binary64,
}

impl WorkingPrecision {
    pub const fn bits(self) -> u32 {
        match self {
            WorkingPrecision::Binary32 => 32,
            WorkingPrecision::Binary64 => 64,
        }
    }

    pub const fn short_name(self) -> &'static str {
        match self {
            WorkingPrecision::Binary32 => "b32",
            WorkingPrecision::Binary64 => "b64",
        }
    }
}

impl fmt::Display for WorkingPrecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown precision `{0}` (expected b32 or b64)")]
pub struct ParsePrecisionError(String);

impl FromStr for WorkingPrecision {
    type Err = ParsePrecisionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "b32" | "f32" | "32" | "single" | "binary32" => Ok(WorkingPrecision::Binary32),
            "b64" | "f64" | "64" | "double" | "binary64" => Ok(WorkingPrecision::Binary64),
            _ => Err(ParsePrecisionError(s.to_string())),
        }
    }
}

/// Scalar type a solve runs in. Every vector and every intermediate of a
/// solve lives in `Self`; nothing is silently widened.
pub trait Real: Float + fmt::Debug + fmt::Display + Default + Send + Sync + Sum + 'static {
    const PRECISION: WorkingPrecision;

    /// Round-to-nearest conversion from binary64.
    fn from_f64(v: f64) -> Self;

    /// Exact widening to binary64.
    fn widen(self) -> f64;

    /// Smallest positive normal value, used as the "is zero" threshold in
    /// breakdown tests.
    fn tiny() -> Self {
        Self::min_positive_value()
    }
}

impl Real for f32 {
    const PRECISION: WorkingPrecision = WorkingPrecision::Binary32;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const PRECISION: WorkingPrecision = WorkingPrecision::Binary64;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn widen(self) -> f64 {
        self
    }
}

/// Cast a binary64 vector into the working precision (round to nearest).
pub fn cast_from_f64<T: Real>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&v| T::from_f64(v)).collect()
}

/// Widen a working-precision vector to binary64 (exact).
pub fn widen_to_f64<T: Real>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|v| v.widen()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        assert_eq!("b32".parse::<WorkingPrecision>().unwrap(), WorkingPrecision::Binary32);
        assert_eq!("double".parse::<WorkingPrecision>().unwrap(), WorkingPrecision::Binary64);
        assert!("b16".parse::<WorkingPrecision>().is_err());
        assert_eq!(WorkingPrecision::Binary64.to_string(), "b64");
        assert_eq!(WorkingPrecision::Binary32.bits(), 32);
    }

    #[test]
    fn narrowing_rounds_to_nearest() {
        let v = 1.0 + f64::EPSILON;
        let narrowed: Vec<f32> = cast_from_f64(&[v, 0.1]);
        assert_eq!(narrowed[0], 1.0f32);
        assert_eq!(narrowed[1], 0.1f32);
        assert_eq!(widen_to_f64(&narrowed)[1], 0.1f32 as f64);
    }

    #[test]
    fn tiny_is_smallest_normal() {
        assert_eq!(<f32 as Real>::tiny(), f32::MIN_POSITIVE);
        assert_eq!(<f64 as Real>::tiny(), f64::MIN_POSITIVE);
    }
}
