//! Parameter containers and the aggregation algebra applied to them.

mod codec;

pub use codec::{deserialize, serialize, size_bytes, FORMAT_VERSION, MAGIC};

use thiserror::Error;

use crate::scalar::Scalar;

/// Tolerance on `|sum(p) - 1|` accepted by [`fedavg`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Origin recorded on aggregated pairs.
pub const AGGREGATE_ORIGIN: &str = "aggregate";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("weights sum to {0}, expected 1")]
    InvalidWeights(f64),
    #[error("non-finite value produced: {0}")]
    Numeric(String),
    #[error("decode error: {0}")]
    Decode(String),
}

/// Flat parameter vector tagged with the architecture it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<S> {
    values: Vec<S>,
    shape_tag: String,
}

impl<S: Scalar> ParamVector<S> {
    pub fn new(shape_tag: impl Into<String>, values: Vec<S>) -> Result<Self, ModelError> {
        let shape_tag = shape_tag.into();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Numeric(format!("{shape_tag}[{i}] is not finite")));
        }
        Ok(Self { values, shape_tag })
    }

    pub fn zeros(shape_tag: impl Into<String>, len: usize) -> Self {
        Self {
            values: vec![S::zero(); len],
            shape_tag: shape_tag.into(),
        }
    }

    /// A vector with the same shape as `self`, filled with zeros.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape_tag.clone(), self.len())
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn shape_tag(&self) -> &str {
        &self.shape_tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> S {
        self.values.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    fn check_compatible(&self, other: &Self) -> Result<(), ModelError> {
        if self.shape_tag != other.shape_tag || self.len() != other.len() {
            return Err(ModelError::Shape(format!(
                "{}[{}] vs {}[{}]",
                self.shape_tag,
                self.len(),
                other.shape_tag,
                other.len()
            )));
        }
        Ok(())
    }
}

/// Discriminator and generator parameters of one node at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPair<S> {
    pub d: ParamVector<S>,
    pub g: ParamVector<S>,
    pub origin: String,
    pub iteration: u64,
}

impl<S: Scalar> ModelPair<S> {
    pub fn new(d: ParamVector<S>, g: ParamVector<S>, origin: impl Into<String>, iteration: u64) -> Self {
        Self {
            d,
            g,
            origin: origin.into(),
            iteration,
        }
    }

    /// Copy relabelled with a new origin and iteration.
    pub fn snapshot(&self, origin: &str, iteration: u64) -> Self {
        Self {
            d: self.d.clone(),
            g: self.g.clone(),
            origin: origin.to_string(),
            iteration,
        }
    }

    /// Bitwise equality of both parameter vectors.
    pub fn same_params(&self, other: &Self) -> bool {
        fn bits<S: Scalar>(v: &ParamVector<S>) -> Vec<u64> {
            v.values().iter().map(|x| x.as_f64().to_bits()).collect()
        }
        self.d.shape_tag == other.d.shape_tag
            && self.g.shape_tag == other.g.shape_tag
            && bits(&self.d) == bits(&other.d)
            && bits(&self.g) == bits(&other.g)
    }
}

/// Aggregation weight `p` of a node, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NodeWeight(f64);

impl NodeWeight {
    pub fn new(p: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::InvalidArgument(format!("weight {p} outside [0, 1]")));
        }
        Ok(Self(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Weights proportional to dataset sizes.
    pub fn by_size(sizes: &[usize]) -> Result<Vec<Self>, ModelError> {
        let total: usize = sizes.iter().sum();
        if total == 0 {
            return Err(ModelError::InvalidArgument("all dataset sizes are zero".into()));
        }
        sizes.iter().map(|&s| Self::new(s as f64 / total as f64)).collect()
    }

    pub fn uniform(count: usize) -> Vec<Self> {
        vec![Self(1.0 / count as f64); count]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SummationOrder {
    /// Sorted by origin id; bitwise independent of arrival order.
    Canonical,
    /// As supplied. Only used to demonstrate the ordering property failing.
    AsGiven,
}

/// Weighted element-wise average of `d` and `g` over all pairs.
pub fn fedavg<S: Scalar>(pairs: &[(ModelPair<S>, NodeWeight)]) -> Result<ModelPair<S>, ModelError> {
    fedavg_ordered(pairs, SummationOrder::Canonical)
}

pub(crate) fn fedavg_ordered<S: Scalar>(
    pairs: &[(ModelPair<S>, NodeWeight)],
    order: SummationOrder,
) -> Result<ModelPair<S>, ModelError> {
    let Some((first, _)) = pairs.first() else {
        return Err(ModelError::InvalidArgument("no models to aggregate".into()));
    };
    for (pair, _) in &pairs[1..] {
        first.d.check_compatible(&pair.d)?;
        first.g.check_compatible(&pair.g)?;
    }
    let weights: Vec<f64> = pairs.iter().map(|(_, w)| w.value()).collect();
    let total = crate::scalar::pairwise_sum(&weights);
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(ModelError::InvalidWeights(total));
    }

    let mut ordered: Vec<&(ModelPair<S>, NodeWeight)> = pairs.iter().collect();
    if order == SummationOrder::Canonical {
        ordered.sort_by(|a, b| a.0.origin.cmp(&b.0.origin));
        if ordered.windows(2).any(|w| w[0].0.origin == w[1].0.origin) {
            return Err(ModelError::InvalidArgument("duplicate origin in aggregation".into()));
        }
    }

    let d_terms: Vec<(&[S], S)> = ordered.iter().map(|(m, w)| (m.d.values(), S::of(w.value()))).collect();
    let g_terms: Vec<(&[S], S)> = ordered.iter().map(|(m, w)| (m.g.values(), S::of(w.value()))).collect();
    let d = ParamVector::new(first.d.shape_tag(), weighted_pairwise(&d_terms))?;
    let g = ParamVector::new(first.g.shape_tag(), weighted_pairwise(&g_terms))?;
    let iteration = ordered.iter().map(|(m, _)| m.iteration).max().unwrap_or(0);
    Ok(ModelPair::new(d, g, AGGREGATE_ORIGIN, iteration))
}

/// Element-wise `sum_j p_j * v_j`, combining contributions as a balanced tree.
fn weighted_pairwise<S: Scalar>(terms: &[(&[S], S)]) -> Vec<S> {
    match terms {
        [] => Vec::new(),
        [(v, p)] => v.iter().map(|&x| *p * x).collect(),
        _ => {
            let mid = terms.len() / 2;
            let mut left = weighted_pairwise(&terms[..mid]);
            let right = weighted_pairwise(&terms[mid..]);
            for (l, r) in left.iter_mut().zip(right) {
                *l = *l + r;
            }
            left
        }
    }
}

/// `v + lr * grad`, element-wise.
///
/// `grad` is the improving direction for whichever player owns `v`; callers
/// negate loss gradients before passing them in.
pub fn apply_update<S: Scalar>(v: &ParamVector<S>, grad: &ParamVector<S>, lr: S) -> Result<ParamVector<S>, ModelError> {
    if lr <= S::zero() || !lr.is_finite() {
        return Err(ModelError::InvalidArgument(format!("learning rate {lr} must be positive")));
    }
    v.check_compatible(grad)?;
    let values = v
        .values
        .iter()
        .zip(&grad.values)
        .map(|(&x, &g)| x + lr * g)
        .collect();
    ParamVector::new(v.shape_tag.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pv(v: &[f64]) -> ParamVector<f64> {
        ParamVector::new("t", v.to_vec()).unwrap()
    }

    fn pair(origin: &str, d: &[f64]) -> ModelPair<f64> {
        ModelPair::new(pv(d), pv(&[]), origin, 0)
    }

    fn w(p: f64) -> NodeWeight {
        NodeWeight::new(p).unwrap()
    }

    #[test]
    fn fedavg_single_is_identity() {
        let m = pair("a", &[1.5, -2.0, 3.25]);
        let out = fedavg(&[(m.clone(), w(1.0))]).unwrap();
        assert!(out.same_params(&m));
        assert_eq!(out.origin, AGGREGATE_ORIGIN);
    }

    #[test]
    fn fedavg_small_cases() {
        let out = fedavg(&[(pair("a", &[0.0, 2.0]), w(0.5)), (pair("b", &[2.0, 4.0]), w(0.5))]).unwrap();
        assert_eq!(out.d.values(), &[1.0, 3.0]);
        let out = fedavg(&[(pair("a", &[0.0, 0.0]), w(0.25)), (pair("b", &[4.0, 8.0]), w(0.75))]).unwrap();
        assert_eq!(out.d.values(), &[3.0, 6.0]);
    }

    #[test]
    fn fedavg_iteration_is_max() {
        let mut a = pair("a", &[1.0]);
        a.iteration = 7;
        let mut b = pair("b", &[1.0]);
        b.iteration = 12;
        assert_eq!(fedavg(&[(a, w(0.5)), (b, w(0.5))]).unwrap().iteration, 12);
    }

    #[test]
    fn fedavg_errors() {
        assert!(matches!(fedavg::<f64>(&[]), Err(ModelError::InvalidArgument(_))));
        let a = pair("a", &[1.0]);
        let b = pair("b", &[1.0, 2.0]);
        assert!(matches!(fedavg(&[(a.clone(), w(0.5)), (b, w(0.5))]), Err(ModelError::Shape(_))));
        let mut c = pair("c", &[1.0]);
        c.d.shape_tag = "other".into();
        assert!(matches!(fedavg(&[(a.clone(), w(0.5)), (c, w(0.5))]), Err(ModelError::Shape(_))));
        let b = pair("b", &[2.0]);
        assert!(matches!(fedavg(&[(a, w(0.5)), (b, w(0.6))]), Err(ModelError::InvalidWeights(_))));
    }

    #[test]
    fn fedavg_uniform_matches_naive_mean_at_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let m = 7;
        let pairs: Vec<_> = (0..m)
            .map(|j| {
                let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
                (pair(&format!("n{j}"), &d), w(1.0 / m as f64))
            })
            .collect();
        let out = fedavg(&pairs).unwrap();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut s = 0.0;
            for (p, _) in &pairs {
                s += p.d.values()[i];
            }
            let mean = s / m as f64;
            let scale = pairs.iter().map(|(p, _)| p.d.values()[i].abs()).fold(0.0, f64::max);
            worst = worst.max((out.d.values()[i] - mean).abs() / scale);
        }
        assert!(worst <= 1e-12, "relative error {worst}");
    }

    #[test]
    fn apply_update_cases() {
        assert_eq!(apply_update(&pv(&[1.0, 2.0]), &pv(&[0.0, 0.0]), 0.3).unwrap().values(), &[1.0, 2.0]);
        assert_eq!(apply_update(&pv(&[1.0]), &pv(&[2.0]), 0.5).unwrap().values(), &[2.0]);
        assert_eq!(apply_update(&pv(&[1.0, -1.0]), &pv(&[-1.0, 1.0]), 1.0).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn apply_update_errors() {
        assert!(matches!(apply_update(&pv(&[1.0]), &pv(&[1.0, 2.0]), 0.1), Err(ModelError::Shape(_))));
        assert!(matches!(apply_update(&pv(&[1.0]), &pv(&[1.0]), 0.0), Err(ModelError::InvalidArgument(_))));
        assert!(matches!(apply_update(&pv(&[f64::MAX]), &pv(&[f64::MAX]), 1.0), Err(ModelError::Numeric(_))));
        assert!(ParamVector::new("t", vec![f64::NAN]).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let a = ModelPair::new(ParamVector::new("t", vec![1.0f32, 3.0]).unwrap(), ParamVector::zeros("g", 0), "a", 0);
        let b = ModelPair::new(ParamVector::new("t", vec![3.0f32, 5.0]).unwrap(), ParamVector::zeros("g", 0), "b", 0);
        let out = fedavg(&[(a, w(0.5)), (b, w(0.5))]).unwrap();
        assert_eq!(out.d.values(), &[2.0f32, 4.0]);
    }

    #[test]
    fn weights_by_size() {
        let ws = NodeWeight::by_size(&[1, 3]).unwrap();
        assert_eq!(ws, vec![w(0.25), w(0.75)]);
        assert!(NodeWeight::new(1.5).is_err());
    }

    proptest! {
        #[test]
        fn fedavg_permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 16), 1..9),
            seed in any::<u64>(),
        ) {
            let m = rows.len();
            let pairs: Vec<_> = rows
                .iter()
                .enumerate()
                .map(|(j, d)| (pair(&format!("n{j}"), d), w(1.0 / m as f64)))
                .collect();
            let mut shuffled = pairs.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!(fedavg(&pairs).unwrap().same_params(&fedavg(&shuffled).unwrap()));
        }

        #[test]
        fn apply_update_is_additive_in_lr(
            v in prop::collection::vec(-100.0f64..100.0, 1..32),
            a in 1e-3f64..1.0,
            b in 1e-3f64..1.0,
        ) {
            let g: Vec<f64> = v.iter().map(|x| x.sin() * 10.0).collect();
            let (v, g) = (pv(&v), pv(&g));
            let twice = apply_update(&apply_update(&v, &g, a).unwrap(), &g, b).unwrap();
            let once = apply_update(&v, &g, a + b).unwrap();
            for (x, y) in twice.values().iter().zip(once.values()) {
                let scale = x.abs().max(y.abs()).max(1.0);
                prop_assert!((x - y).abs() / scale <= 1e-12);
            }
        }
    }
}
