//! Generative-model quality metrics driven by an oracle classifier.

use super::TrainError;
use crate::scalar::{pairwise_sum, Scalar};

/// A sample's features and label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    pub x: Vec<S>,
    pub y: S,
}

/// Classifier that maps a sample to a distribution over classes.
pub trait OracleClassifier<S: Scalar> {
    fn probabilities(&self, x: &[S]) -> Vec<S>;

    /// Softmax score of the predicted class.
    fn score(&self, x: &[S]) -> S {
        self.probabilities(x).into_iter().fold(S::zero(), S::max)
    }
}

/// Same distribution for every input.
#[derive(Debug, Clone)]
pub struct ConstantOracle<S>(pub Vec<S>);

impl<S: Scalar> OracleClassifier<S> for ConstantOracle<S> {
    fn probabilities(&self, _: &[S]) -> Vec<S> {
        self.0.clone()
    }
}

/// Row `x[0]` of a fixed table; the first feature is the row index.
#[derive(Debug, Clone)]
pub struct LookupOracle<S>(pub Vec<Vec<S>>);

impl<S: Scalar> OracleClassifier<S> for LookupOracle<S> {
    fn probabilities(&self, x: &[S]) -> Vec<S> {
        let row = x.first().and_then(|v| v.to_usize()).expect("lookup key in x[0]");
        self.0[row].clone()
    }
}

/// Two classes split at `mu`: `P(above) = logistic((x - mu) / sigma)`.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdOracle {
    pub mu: f64,
    pub sigma: f64,
}

impl ThresholdOracle {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma }
    }

    /// `x` labelled with its predicted class, `-1` below the threshold, `+1` above.
    pub fn labelled<S: Scalar>(&self, x: S) -> Sample<S> {
        let y = if x.as_f64() > self.mu { S::one() } else { -S::one() };
        Sample { x: vec![x], y }
    }
}

impl<S: Scalar> OracleClassifier<S> for ThresholdOracle {
    fn probabilities(&self, x: &[S]) -> Vec<S> {
        let z = (x[0].as_f64() - self.mu) / self.sigma;
        let above = 1.0 / (1.0 + (-z).exp());
        vec![S::of(1.0 - above), S::of(above)]
    }
}

/// `(1/N) sum_i (f_o(x_r^i) |y_r^i| - f_o(x_g^i) |y_g^i|)` with `f_o` the
/// oracle's predicted-class score.
pub fn emd<S: Scalar, O: OracleClassifier<S> + ?Sized>(
    real: &[Sample<S>],
    generated: &[Sample<S>],
    oracle: &O,
) -> Result<S, TrainError> {
    if real.len() != generated.len() {
        return Err(TrainError::InvalidArgument(format!(
            "{} real vs {} generated samples",
            real.len(),
            generated.len()
        )));
    }
    if real.is_empty() {
        return Err(TrainError::InvalidArgument("no samples".into()));
    }
    let terms: Vec<S> = real
        .iter()
        .zip(generated)
        .map(|(r, g)| oracle.score(&r.x) * r.y.abs() - oracle.score(&g.x) * g.y.abs())
        .collect();
    Ok(pairwise_sum(&terms) / S::of(real.len() as f64))
}

fn check_distribution<S: Scalar>(p: &[S], classes: usize) -> Result<(), TrainError> {
    let total = pairwise_sum(p).as_f64();
    if p.len() != classes || p.iter().any(|&v| v < S::zero() || !v.is_finite()) || (total - 1.0).abs() > 1e-9 {
        return Err(TrainError::InvalidArgument(format!(
            "classifier output is not a distribution over {classes} classes"
        )));
    }
    Ok(())
}

/// `exp(E_x KL(p(y|x) || p(y)))` per split, averaged over `splits`
/// contiguous chunks.
pub fn inception_score<S: Scalar, O: OracleClassifier<S> + ?Sized>(
    samples: &[Vec<S>],
    classifier: &O,
    splits: usize,
) -> Result<S, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::InvalidArgument("no samples".into()));
    }
    if splits == 0 || splits > samples.len() {
        return Err(TrainError::InvalidArgument(format!(
            "{splits} splits for {} samples",
            samples.len()
        )));
    }
    let probs: Vec<Vec<S>> = samples.iter().map(|x| classifier.probabilities(x)).collect();
    let classes = probs[0].len();
    for p in &probs {
        check_distribution(p, classes)?;
    }
    let n = probs.len();
    let mut scores = Vec::with_capacity(splits);
    for k in 0..splits {
        let chunk = &probs[k * n / splits..(k + 1) * n / splits];
        let m = S::of(chunk.len() as f64);
        let marginal: Vec<S> = (0..classes)
            .map(|c| pairwise_sum(&chunk.iter().map(|p| p[c]).collect::<Vec<_>>()) / m)
            .collect();
        let kls: Vec<S> = chunk
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&marginal)
                    .filter(|(&pc, _)| pc > S::zero())
                    .map(|(&pc, &qc)| pc * (pc.ln() - qc.ln()))
                    .sum::<S>()
            })
            .collect();
        let mean_kl = (pairwise_sum(&kls) / m).max(S::zero());
        scores.push(mean_kl.exp());
    }
    Ok(pairwise_sum(&scores) / S::of(splits as f64))
}
