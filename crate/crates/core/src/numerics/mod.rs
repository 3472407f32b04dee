//! Dense linear algebra and seeded randomness shared by every other module.
//!
//! Everything here is deterministic: matrix products accumulate in a fixed
//! row-major, left-to-right order and random streams come from a pinned
//! counter-based generator, so a run with fixed seeds is bit-identical across
//! repetitions and thread counts.

mod matrix;
mod rng;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use thiserror::Error;

pub use matrix::{naive_matmul, Matrix};
pub use rng::{split_rng, Rng, Stream, RNG_ALGORITHM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite value in input to {0}")]
    NonFinite(&'static str),
}

/// Floating-point element type. `f64` is the default everywhere; `f32` is an
/// opt-in training precision.
pub trait Real:
    Float + Default + Debug + Display + Send + Sync + Sum + 'static
{
    /// Tag stored in checkpoint headers and reports.
    const PRECISION: Precision;

    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_usize(v: usize) -> Self {
        Self::of(v as f64)
    }
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f64 {
    const PRECISION: Precision = Precision::F64;

    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

impl Real for f32 {
    const PRECISION: Precision = Precision::F32;

    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    pub fn byte_width(self) -> usize {
        match self {
            Precision::F64 => 8,
            Precision::F32 => 4,
        }
    }

    pub fn flag(self) -> u8 {
        match self {
            Precision::F64 => 64,
            Precision::F32 => 32,
        }
    }

    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            64 => Some(Precision::F64),
            32 => Some(Precision::F32),
            _ => None,
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Precision::F64 => f.write_str("f64"),
            Precision::F32 => f.write_str("f32"),
        }
    }
}

/// Softmax of `v` computed after subtracting the maximum entry.
pub fn stable_softmax<T: Real>(v: &[T]) -> Result<Vec<T>, NumericsError> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out)?;
    Ok(out)
}

/// In-place variant of [`stable_softmax`].
pub fn softmax_in_place<T: Real>(v: &mut [T]) -> Result<(), NumericsError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite("softmax"));
    }
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total = total + *x;
    }
    for x in v.iter_mut() {
        *x = *x / total;
    }
    Ok(())
}

/// `ln(sum(exp(v)))` with max subtraction. Returns NaN for non-finite input.
pub fn log_sum_exp<T: Real>(v: &[T]) -> T {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return T::nan();
    }
    let total = v.iter().fold(T::zero(), |acc, &x| acc + (x - max).exp());
    max + total.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_symmetric_pair() {
        assert_eq!(stable_softmax(&[0.0f64, 0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        assert_eq!(stable_softmax(&[1000.0f64, 1000.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_analytic_quarter() {
        let p = stable_softmax(&[1.0f64.ln(), 3.0f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(stable_softmax(&[0.0f64, f64::NAN]).is_err());
        assert!(stable_softmax(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn log_sum_exp_matches_direct_formula() {
        let v = [0.3f64, -1.2, 2.5];
        let direct = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(v in prop::collection::vec(-50.0f64..50.0, 1..20)) {
            let p = stable_softmax(&v).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax_shift_invariant(
            v in prop::collection::vec(-50.0f64..50.0, 1..20),
            c in -1e3f64..1e3,
        ) {
            let p = stable_softmax(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let q = stable_softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
