//! Linear regression under squared loss, `1/(2B) * sum (w.x - y)^2`.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::{LocalDataset, LocalGradients, Trainer, TrainerConfig, TrainError};
use crate::model::{ModelPair, ParamVector};
use crate::scalar::Scalar;

pub const LS_D_TAG: &str = "linear";
pub const LS_G_TAG: &str = "unused";

pub fn least_squares_loss<S: Scalar>(w: &[S], batch: &[(&[f64], f64)]) -> S {
    let n = S::of(batch.len() as f64);
    batch
        .iter()
        .map(|(x, y)| {
            let r = residual(w, x, *y);
            r * r
        })
        .sum::<S>()
        / (S::of(2.0) * n)
}

fn residual<S: Scalar>(w: &[S], x: &[f64], y: f64) -> S {
    w.iter().zip(x).map(|(&wi, &xi)| wi * S::of(xi)).sum::<S>() - S::of(y)
}

/// Negative loss gradient, `-(1/B) sum (w.x - y) x`.
pub fn least_squares_direction<S: Scalar>(w: &[S], batch: &[(&[f64], f64)]) -> Result<Vec<S>, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::InvalidArgument("empty batch".into()));
    }
    let mut grad = vec![S::zero(); w.len()];
    for (x, y) in batch {
        if x.len() != w.len() {
            return Err(TrainError::InvalidArgument(format!("feature width {} != {}", x.len(), w.len())));
        }
        let r = residual(w, x, *y);
        for (g, &xi) in grad.iter_mut().zip(x.iter()) {
            *g = *g - r * S::of(xi);
        }
    }
    let n = S::of(batch.len() as f64);
    Ok(grad.into_iter().map(|g| g / n).collect())
}

/// Federated least squares: only the discriminator slot carries parameters;
/// the generator slot is an empty vector and its direction is always zero.
/// Minimizer of the full-data squared loss: solves `X^T X w = X^T y` by
/// Cholesky factorization.
pub fn normal_equations(data: &LocalDataset) -> Result<Vec<f64>, TrainError> {
    let d = data.dim();
    if data.size() == 0 || d == 0 {
        return Err(TrainError::InvalidArgument("empty dataset".into()));
    }
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for (x, y) in data.features.iter().zip(&data.labels) {
        for i in 0..d {
            b[i] += x[i] * y;
            for j in 0..=i {
                a[i][j] += x[i] * x[j];
            }
        }
    }
    // Lower-triangular L with A = L L^T, stored in place.
    for j in 0..d {
        let diag = a[j][j] - (0..j).map(|k| a[j][k] * a[j][k]).sum::<f64>();
        if diag.is_nan() || diag <= 0.0 {
            return Err(TrainError::InvalidArgument("normal matrix is singular".into()));
        }
        a[j][j] = diag.sqrt();
        for i in j + 1..d {
            a[i][j] = (a[i][j] - (0..j).map(|k| a[i][k] * a[j][k]).sum::<f64>()) / a[j][j];
        }
    }
    let mut z = vec![0.0; d];
    for i in 0..d {
        z[i] = (b[i] - (0..i).map(|k| a[i][k] * z[k]).sum::<f64>()) / a[i][i];
    }
    let mut w = vec![0.0; d];
    for i in (0..d).rev() {
        w[i] = (z[i] - (i + 1..d).map(|k| a[k][i] * w[k]).sum::<f64>()) / a[i][i];
    }
    Ok(w)
}

#[derive(Debug, Clone)]
pub struct LeastSquaresTrainer {
    data: LocalDataset,
}

impl LeastSquaresTrainer {
    pub fn new(data: LocalDataset) -> Result<Self, TrainError> {
        if data.size() == 0 {
            return Err(TrainError::InvalidArgument("empty local dataset".into()));
        }
        Ok(Self { data })
    }

    pub fn initial_model<S: Scalar>(dim: usize) -> ModelPair<S> {
        ModelPair::new(ParamVector::zeros(LS_D_TAG, dim), ParamVector::zeros(LS_G_TAG, 0), "init", 0)
    }

    pub fn data(&self) -> &LocalDataset {
        &self.data
    }

    fn rows(&self, indices: impl Iterator<Item = usize>) -> Vec<(&[f64], f64)> {
        indices.map(|i| (self.data.features[i].as_slice(), self.data.labels[i])).collect()
    }
}

impl<S: Scalar> Trainer<S> for LeastSquaresTrainer {
    fn local_step(
        &mut self,
        model: &ModelPair<S>,
        config: &TrainerConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<LocalGradients<S>, TrainError> {
        if config.batch_size == 0 {
            return Err(TrainError::InvalidArgument("batch size must be positive".into()));
        }
        let batch = if config.batch_size >= self.data.size() {
            self.rows(0..self.data.size())
        } else {
            self.rows(sample(rng, self.data.size(), config.batch_size).into_iter())
        };
        let dir = least_squares_direction(model.d.values(), &batch)?;
        Ok(LocalGradients {
            discriminator: ParamVector::new(model.d.shape_tag(), dir)?,
            generator: model.g.zeros_like(),
        })
    }

    fn dataset_size(&self) -> usize {
        self.data.size()
    }

    fn evaluate(&self, model: &ModelPair<S>) -> f64 {
        least_squares_loss(model.d.values(), &self.rows(0..self.data.size())).as_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::apply_update;
    use crate::train::regression_dataset;
    use rand::SeedableRng;

    #[test]
    fn one_step_hand_algebra() {
        let data = LocalDataset::new(vec![vec![1.0]], vec![2.0]).unwrap();
        let mut t = LeastSquaresTrainer::new(data).unwrap();
        let m = LeastSquaresTrainer::initial_model::<f64>(1);
        let cfg = TrainerConfig::constant(0.1, 0.1, 1);
        let g = t.local_step(&m, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let w = apply_update(&m.d, &g.discriminator, 0.1).unwrap();
        assert!((w.values()[0] - 0.2).abs() < 1e-15);
        assert!(g.generator.is_empty());
    }

    #[test]
    fn stationary_at_ols_solution() {
        // y = 2x0 - x1 exactly, so w = (2, -1) is the OLS solution.
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, -1.0]];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] - x[1]).collect();
        let data = LocalDataset::new(xs, ys).unwrap();
        let batch: Vec<(&[f64], f64)> = data.features.iter().map(|x| x.as_slice()).zip(data.labels.iter().copied()).collect();
        let dir = least_squares_direction(&[2.0f64, -1.0], &batch).unwrap();
        assert!(dir.iter().map(|g| g * g).sum::<f64>().sqrt() <= 1e-10);
    }

    #[test]
    fn normal_equations_exact_fit() {
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, -1.0]];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] - x[1]).collect();
        let w = normal_equations(&LocalDataset::new(xs, ys).unwrap()).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-12 && (w[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_equations_hand_2x2() {
        // X^T X = [[2, 1], [1, 2]], X^T y = [3, 0] -> w = (2, -1).
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let w = normal_equations(&LocalDataset::new(xs, vec![2.0, -1.0, 1.0]).unwrap()).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-12 && (w[1] + 1.0).abs() < 1e-12);
        let rank_deficient = LocalDataset::new(vec![vec![1.0, 1.0]; 3], vec![1.0; 3]).unwrap();
        assert!(normal_equations(&rank_deficient).is_err());
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(least_squares_direction::<f64>(&[0.0], &[]).is_err());
    }

    #[test]
    fn direction_matches_finite_differences() {
        let (data, _) = regression_dataset(64, 5, 0.3, 2);
        let batch: Vec<(&[f64], f64)> = data.features.iter().map(|x| x.as_slice()).zip(data.labels.iter().copied()).collect();
        let w: Vec<f64> = vec![0.3, -1.2, 0.8, 2.0, -0.1];
        let dir = least_squares_direction(&w, &batch).unwrap();
        let h = 1e-5;
        for k in 0..w.len() {
            let (mut up, mut dn) = (w.clone(), w.clone());
            up[k] += h;
            dn[k] -= h;
            let fd = -(least_squares_loss(&up, &batch) - least_squares_loss(&dn, &batch)) / (2.0 * h);
            assert!((fd - dir[k]).abs() <= 1e-4 * fd.abs().max(dir[k].abs()).max(1e-8));
        }
    }
}
