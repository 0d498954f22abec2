//! Floating-point scalar abstraction shared by the model, optimizers and training loop.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::distributions::uniform::SampleUniform;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point: f32 or f64.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + SampleUniform
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Name written into checkpoints so a file is never loaded at the wrong precision.
    const DTYPE: &'static str;

    /// Lossy conversion from an `f64` constant or hyperparameter.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// `ln(1 + exp(x))` without overflow.
    #[inline]
    fn softplus(self) -> Self {
        if self > Self::zero() {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }

    /// Logistic sigmoid, stable for large |x|.
    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &x in &[-5.0f64, -0.3, 0.0, 0.7, 4.0] {
            let naive = (1.0 + x.exp()).ln();
            assert!((x.softplus() - naive).abs() < 1e-14);
        }
        assert_eq!(0.0f64.softplus(), std::f64::consts::LN_2);
    }

    #[test]
    fn softplus_and_sigmoid_saturate_cleanly() {
        assert!((800.0f64).softplus().is_finite());
        assert_eq!((-800.0f64).softplus(), 0.0);
        assert_eq!((800.0f64).sigmoid(), 1.0);
        assert_eq!((-800.0f64).sigmoid(), 0.0);
        assert!((1000.0f32).softplus().is_finite());
    }
}
