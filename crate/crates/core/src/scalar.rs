//! Scalar abstraction shared by parameter vectors, trainers and metrics.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for model parameters.
///
/// Implemented for `f32` and `f64`. The wire format always carries 64-bit
/// IEEE-754 values, so `f32` models widen losslessly on encode.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; used for constants and sampled noise.
    fn of(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Pairwise (cascade) summation of a slice.
pub fn pairwise_sum<S: Scalar>(values: &[S]) -> S {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().fold(S::zero(), |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_exact_values() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
    }

    #[test]
    fn pairwise_beats_naive_accumulation_error() {
        let xs = vec![0.1f32; 1 << 20];
        let naive: f32 = xs.iter().fold(0.0, |a, &b| a + b);
        let exact = 0.1f64 as f32 as f64 * (1 << 20) as f64;
        let pw = pairwise_sum(&xs) as f64;
        assert!((pw - exact).abs() < (naive as f64 - exact).abs());
    }
}
