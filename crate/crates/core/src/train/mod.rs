//! Local training behind a uniform trainer contract, plus evaluation
//! metrics, partitioners and dataset files.

mod data;
mod gan;
mod least_squares;
mod metrics;
mod partition;

pub use data::{
    parse_dataset, parse_partitions, regression_dataset, write_dataset, write_partitions, LocalDataset,
};
pub use gan::{
    evaluate_gan, gan_direction, GAN_D_TAG, GAN_G_TAG, gan_losses, gan_samples, GanBatch, GanEvaluation, GanToyParams, GanTrainer,
};
pub use least_squares::{
    least_squares_direction, least_squares_loss, normal_equations, LeastSquaresTrainer, LS_D_TAG, LS_G_TAG,
};
pub use metrics::{
    emd, inception_score, ConstantOracle, LookupOracle, OracleClassifier, Sample, ThresholdOracle,
};
pub use partition::{dirichlet_partition, iid_partition};

use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{ModelError, ModelPair, ParamVector};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Learning rate as a function of the global step `t`.
#[derive(Clone)]
pub enum LrSchedule {
    Constant(f64),
    Custom(Arc<dyn Fn(u64) -> f64 + Send + Sync>),
}

impl LrSchedule {
    pub fn at(&self, t: u64) -> f64 {
        match self {
            LrSchedule::Constant(lr) => *lr,
            LrSchedule::Custom(f) => f(t),
        }
    }
}

impl fmt::Debug for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LrSchedule::Constant(lr) => write!(f, "Constant({lr})"),
            LrSchedule::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Shared by every node of a run; learning rates never differ across nodes.
#[derive(Debug, Clone)]
pub struct TrainerConfig {
    pub lr_d: LrSchedule,
    pub lr_g: LrSchedule,
    pub batch_size: usize,
}

impl TrainerConfig {
    pub fn constant(lr_d: f64, lr_g: f64, batch_size: usize) -> Self {
        Self {
            lr_d: LrSchedule::Constant(lr_d),
            lr_g: LrSchedule::Constant(lr_g),
            batch_size,
        }
    }
}

/// Improving directions for the discriminator and generator.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGradients<S> {
    pub discriminator: ParamVector<S>,
    pub generator: ParamVector<S>,
}

/// One node's local learner.
pub trait Trainer<S: Scalar>: Send {
    /// Draws a batch with `rng` and returns the improving directions at `model`.
    fn local_step(
        &mut self,
        model: &ModelPair<S>,
        config: &TrainerConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<LocalGradients<S>, TrainError>;

    /// `|R_i|`, drives size-proportional aggregation weights.
    fn dataset_size(&self) -> usize;

    /// Quality figure reported after each synchronization (lower is better).
    fn evaluate(&self, model: &ModelPair<S>) -> f64;

    /// Parameters this node submits at a synchronization point.
    fn submission(&self, model: &ModelPair<S>) -> ModelPair<S> {
        model.clone()
    }
}

/// Wraps an honest trainer but submits adversarial parameters: the local
/// model scaled by `scale` and shifted by `shift`.
pub struct PoisonedTrainer<T> {
    pub inner: T,
    pub scale: f64,
    pub shift: f64,
}

impl<S: Scalar, T: Trainer<S>> Trainer<S> for PoisonedTrainer<T> {
    fn local_step(
        &mut self,
        model: &ModelPair<S>,
        config: &TrainerConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<LocalGradients<S>, TrainError> {
        self.inner.local_step(model, config, rng)
    }

    fn dataset_size(&self) -> usize {
        self.inner.dataset_size()
    }

    fn evaluate(&self, model: &ModelPair<S>) -> f64 {
        self.inner.evaluate(model)
    }

    fn submission(&self, model: &ModelPair<S>) -> ModelPair<S> {
        let warp = |v: &ParamVector<S>| {
            let values = v
                .values()
                .iter()
                .map(|&x| x * S::of(self.scale) + S::of(self.shift))
                .collect();
            ParamVector::new(v.shape_tag(), values).unwrap_or_else(|_| v.clone())
        };
        ModelPair::new(warp(&model.d), warp(&model.g), model.origin.clone(), model.iteration)
    }
}
