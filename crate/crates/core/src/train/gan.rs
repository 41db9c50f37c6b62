//! One-dimensional GAN with closed-form gradients.
//!
//! Generator `g(z) = a z + b`, `z ~ N(0, 1)`. Discriminator
//! `D(x) = logistic(w0 + w1 x + w2 x^2)`. Losses are the non-saturating
//! pair
//!
//! ```text
//! L_D = -mean log D(x_real) - mean log(1 - D(g(z)))
//! L_G = -mean log D(g(z))
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::metrics::{emd, Sample, ThresholdOracle};
use super::{LocalGradients, Trainer, TrainerConfig, TrainError};
use crate::model::{ModelPair, ParamVector};
use crate::scalar::Scalar;

pub const GAN_D_TAG: &str = "gan-disc-quadratic";
pub const GAN_G_TAG: &str = "gan-gen-affine";

/// Samples drawn when a trainer reports its EMD.
const EVAL_SAMPLES: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanToyParams<S> {
    pub a: S,
    pub b: S,
    pub w0: S,
    pub w1: S,
    pub w2: S,
}

impl<S: Scalar> GanToyParams<S> {
    /// Identity generator, indifferent discriminator.
    pub fn initial() -> Self {
        Self {
            a: S::one(),
            b: S::zero(),
            w0: S::zero(),
            w1: S::zero(),
            w2: S::zero(),
        }
    }

    pub fn from_model(m: &ModelPair<S>) -> Result<Self, TrainError> {
        match (m.d.values(), m.g.values()) {
            (&[w0, w1, w2], &[a, b]) => Ok(Self { a, b, w0, w1, w2 }),
            _ => Err(TrainError::InvalidArgument(format!(
                "expected 3 discriminator and 2 generator parameters, got {} and {}",
                m.d.len(),
                m.g.len()
            ))),
        }
    }

    pub fn to_model(&self, origin: &str, iteration: u64) -> ModelPair<S> {
        ModelPair::new(
            ParamVector::new(GAN_D_TAG, vec![self.w0, self.w1, self.w2]).expect("finite parameters"),
            ParamVector::new(GAN_G_TAG, vec![self.a, self.b]).expect("finite parameters"),
            origin,
            iteration,
        )
    }

    pub fn generate(&self, z: S) -> S {
        self.a * z + self.b
    }

    fn logit(&self, x: S) -> S {
        self.w0 + self.w1 * x + self.w2 * x * x
    }

    /// `D(x)`.
    pub fn discriminate(&self, x: S) -> S {
        logistic(self.logit(x))
    }
}

fn logistic<S: Scalar>(s: S) -> S {
    if s >= S::zero() {
        S::one() / (S::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (S::one() + e)
    }
}

/// `ln(1 + e^s)` without overflow.
fn softplus<S: Scalar>(s: S) -> S {
    s.max(S::zero()) + (-s.abs()).exp().ln_1p()
}

/// Real samples and generator noise for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GanBatch<S> {
    pub real: Vec<S>,
    pub noise: Vec<S>,
}

/// `(L_D, L_G)` on a batch.
pub fn gan_losses<S: Scalar>(p: &GanToyParams<S>, batch: &GanBatch<S>) -> (S, S) {
    let nr = S::of(batch.real.len() as f64);
    let nf = S::of(batch.noise.len() as f64);
    // -log D = softplus(-s), -log(1 - D) = softplus(s)
    let real: S = batch.real.iter().map(|&x| softplus(-p.logit(x))).sum::<S>() / nr;
    let fake_d: S = batch.noise.iter().map(|&z| softplus(p.logit(p.generate(z)))).sum::<S>() / nf;
    let fake_g: S = batch.noise.iter().map(|&z| softplus(-p.logit(p.generate(z)))).sum::<S>() / nf;
    (real + fake_d, fake_g)
}

/// Negated gradients: `(-dL_D/dw, -dL_G/d(a, b))`.
pub fn gan_direction<S: Scalar>(p: &GanToyParams<S>, batch: &GanBatch<S>) -> Result<([S; 3], [S; 2]), TrainError> {
    if batch.real.is_empty() || batch.noise.is_empty() {
        return Err(TrainError::InvalidArgument("empty batch".into()));
    }
    let nr = S::of(batch.real.len() as f64);
    let nf = S::of(batch.noise.len() as f64);
    let mut dw = [S::zero(); 3];
    let mut dg = [S::zero(); 2];
    for &x in &batch.real {
        // d/dw of -log D(x) = -(1 - D) * (1, x, x^2)
        let c = (S::one() - p.discriminate(x)) / nr;
        dw[0] = dw[0] + c;
        dw[1] = dw[1] + c * x;
        dw[2] = dw[2] + c * x * x;
    }
    for &z in &batch.noise {
        let x = p.generate(z);
        let d = p.discriminate(x);
        // d/dw of -log(1 - D(x)) = D * (1, x, x^2)
        let c = d / nf;
        dw[0] = dw[0] - c;
        dw[1] = dw[1] - c * x;
        dw[2] = dw[2] - c * x * x;
        // d/dx of -log D(x) = -(1 - D) * (w1 + 2 w2 x); dx/da = z, dx/db = 1
        let slope = (S::one() - d) * (p.w1 + S::of(2.0) * p.w2 * x) / nf;
        dg[0] = dg[0] + slope * z;
        dg[1] = dg[1] + slope;
    }
    Ok((dw, dg))
}

/// `n` generator outputs from a seeded noise stream.
pub fn gan_samples<S: Scalar>(p: &GanToyParams<S>, n: usize, seed: u64) -> Vec<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            p.generate(S::of(z))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanEvaluation {
    pub mean: f64,
    pub std: f64,
    /// Against fresh target draws under a threshold oracle at the target mean.
    pub emd: f64,
}

/// Sample moments of the generator and its EMD against the target `N(mu, sigma)`.
pub fn evaluate_gan<S: Scalar>(
    p: &GanToyParams<S>,
    target: (f64, f64),
    n_samples: usize,
    seed: u64,
) -> Result<GanEvaluation, TrainError> {
    if n_samples < 100 {
        return Err(TrainError::InvalidArgument(format!("need at least 100 samples, got {n_samples}")));
    }
    let (mu, sigma) = target;
    let normal = Normal::new(mu, sigma).map_err(|e| TrainError::InvalidArgument(e.to_string()))?;
    let generated: Vec<f64> = gan_samples(p, n_samples, seed).into_iter().map(Scalar::as_f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a11_ba5e);
    let real: Vec<f64> = (0..n_samples).map(|_| normal.sample(&mut rng)).collect();

    let n = n_samples as f64;
    let mean = generated.iter().sum::<f64>() / n;
    let std = (generated.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();

    let oracle = ThresholdOracle::new(mu, sigma);
    let label = |xs: &[f64]| -> Vec<Sample<f64>> { xs.iter().map(|&x| oracle.labelled(x)).collect() };
    let emd = emd(&label(&real), &label(&generated), &oracle)?;
    Ok(GanEvaluation { mean, std, emd })
}

/// Trainer over one-dimensional real samples.
#[derive(Debug, Clone)]
pub struct GanTrainer {
    data: Vec<f64>,
    target: (f64, f64),
    eval_seed: u64,
}

impl GanTrainer {
    /// `target` is only used for evaluation reports, never for gradients.
    pub fn new(data: Vec<f64>, target: (f64, f64), eval_seed: u64) -> Result<Self, TrainError> {
        if data.is_empty() {
            return Err(TrainError::InvalidArgument("empty local dataset".into()));
        }
        Ok(Self { data, target, eval_seed })
    }

    pub fn initial_model<S: Scalar>() -> ModelPair<S> {
        GanToyParams::<S>::initial().to_model("init", 0)
    }

    pub fn draw_batch<S: Scalar>(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> GanBatch<S> {
        let real = (0..batch_size)
            .map(|_| S::of(self.data[rng.gen_range(0..self.data.len())]))
            .collect();
        let noise = (0..batch_size)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                S::of(z)
            })
            .collect();
        GanBatch { real, noise }
    }
}

impl<S: Scalar> Trainer<S> for GanTrainer {
    fn local_step(
        &mut self,
        model: &ModelPair<S>,
        config: &TrainerConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<LocalGradients<S>, TrainError> {
        if config.batch_size == 0 {
            return Err(TrainError::InvalidArgument("batch size must be positive".into()));
        }
        let params = GanToyParams::from_model(model)?;
        let batch = self.draw_batch(config.batch_size, rng);
        let (dw, dg) = gan_direction(&params, &batch)?;
        Ok(LocalGradients {
            discriminator: ParamVector::new(model.d.shape_tag(), dw.to_vec())?,
            generator: ParamVector::new(model.g.shape_tag(), dg.to_vec())?,
        })
    }

    fn dataset_size(&self) -> usize {
        self.data.len()
    }

    fn evaluate(&self, model: &ModelPair<S>) -> f64 {
        GanToyParams::from_model(model)
            .and_then(|p| evaluate_gan(&p, self.target, EVAL_SAMPLES, self.eval_seed))
            .map_or(f64::NAN, |e| e.emd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(rng: &mut ChaCha8Rng) -> GanToyParams<f64> {
        GanToyParams {
            a: rng.gen_range(0.2..2.5),
            b: rng.gen_range(-1.0..4.0),
            w0: rng.gen_range(-1.0..1.0),
            w1: rng.gen_range(-0.5..0.5),
            w2: rng.gen_range(-0.2..0.2),
        }
    }

    #[test]
    fn discriminator_in_open_unit_interval() {
        let p = GanToyParams { a: 1.0, b: 0.0, w0: 0.3, w1: -2.0, w2: 0.7 };
        for x in [-5.0, -1.0, 0.0, 2.5, 5.0] {
            let d = p.discriminate(x);
            assert!(d > 0.0 && d < 1.0, "D({x}) = {d}");
        }
        // saturates in floating point but never leaves [0, 1] or goes NaN
        for x in [-1e6, 1e6] {
            let d = p.discriminate(x);
            assert!((0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..20 {
            let p = random_params(&mut rng);
            let trainer = GanTrainer::new((0..64).map(|_| rng.gen_range(0.0..6.0)).collect(), (3.0, 1.5), 0).unwrap();
            let batch = trainer.draw_batch::<f64>(32, &mut rng);
            let (dw, dg) = gan_direction(&p, &batch).unwrap();
            let fd = |f: &dyn Fn(&mut GanToyParams<f64>, f64), disc: bool| {
                let (mut up, mut dn) = (p, p);
                f(&mut up, h);
                f(&mut dn, -h);
                let pick = |l: (f64, f64)| if disc { l.0 } else { l.1 };
                -(pick(gan_losses(&up, &batch)) - pick(gan_losses(&dn, &batch))) / (2.0 * h)
            };
            let checks = [
                (fd(&|q, e| q.w0 += e, true), dw[0]),
                (fd(&|q, e| q.w1 += e, true), dw[1]),
                (fd(&|q, e| q.w2 += e, true), dw[2]),
                (fd(&|q, e| q.a += e, false), dg[0]),
                (fd(&|q, e| q.b += e, false), dg[1]),
            ];
            for (num, ana) in checks {
                let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
                assert!(rel <= 1e-4, "numeric {num} vs analytic {ana}");
            }
        }
    }

    #[test]
    fn exact_generator_matches_moments() {
        let n = 5000;
        let e = evaluate_gan(&GanToyParams { a: 1.5, b: 3.0, w0: 0.0, w1: 0.0, w2: 0.0 }, (3.0, 1.5), n, 17).unwrap();
        let tol = 5.0 / (n as f64).sqrt() * 1.5;
        assert!((e.mean - 3.0).abs() <= tol);
        assert!((e.std - 1.5).abs() <= tol);
        assert!(e.emd.abs() < 0.02);
    }

    #[test]
    fn degenerate_generator_has_zero_spread() {
        let e = evaluate_gan(&GanToyParams { a: 0.0, b: 3.0, w0: 0.0, w1: 0.0, w2: 0.0 }, (3.0, 1.5), 200, 1).unwrap();
        assert!(e.std.abs() < 1e-12);
        assert!((e.mean - 3.0).abs() < 1e-12);
    }

    #[test]
    fn evaluation_needs_enough_samples() {
        assert!(evaluate_gan(&GanToyParams::<f64>::initial(), (0.0, 1.0), 99, 0).is_err());
    }

    #[test]
    fn model_conversion() {
        let p = GanToyParams { a: 1.0, b: 2.0, w0: 3.0, w1: 4.0, w2: 5.0 };
        assert_eq!(GanToyParams::from_model(&p.to_model("x", 1)).unwrap(), p);
        let wrong = ModelPair::new(ParamVector::<f64>::zeros("d", 2), ParamVector::zeros("g", 2), "x", 0);
        assert!(GanToyParams::from_model(&wrong).is_err());
    }
}
