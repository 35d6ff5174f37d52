//! Variance-exploding SDE machinery: the geometric noise schedule, forward
//! perturbation, the denoising-score-matching objective with σ² weighting,
//! predictor and corrector sampling steps, and optimizer-driven training of
//! pluggable score models.

mod checkpoint;
mod denoiser;
mod model;

pub use checkpoint::{load_scm1, save_scm1};
pub use denoiser::TinyDenoiser;
pub use model::{AnalyticGaussianScore, ScoreModel, ZeroScore};

use ndarray::{Array3, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Geometric noise scale `σ(t) = σ_min · (σ_max/σ_min)^t` on t ∈ [0, 1],
/// discretized into `n_scales` sampling steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub n_scales: usize,
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, n_scales: usize) -> Result<Self> {
        if !(sigma_min.is_finite() && sigma_min > 0.0) {
            return Err(Error::invalid("sigma_min must be a positive real"));
        }
        if !(sigma_max.is_finite() && sigma_max > sigma_min) {
            return Err(Error::invalid("sigma_max must exceed sigma_min"));
        }
        if n_scales == 0 {
            return Err(Error::invalid("n_scales must be positive"));
        }
        Ok(NoiseSchedule {
            sigma_min,
            sigma_max,
            n_scales,
        })
    }

    /// Noise scale at continuous time t ∈ [0, 1].
    pub fn sigma(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("time {t} outside [0, 1]")));
        }
        Ok(self.sigma_min * (self.sigma_max / self.sigma_min).powf(t))
    }

    /// Same σ range rediscretized into `n` sampling steps.
    pub fn with_scales(&self, n: usize) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.sigma_min, self.sigma_max, n)
    }

    /// Times bracketing sampling step `index` ∈ {1, …, n_scales}: the step
    /// moves from `t_hi = index/n_scales` down to `t_lo = (index−1)/n_scales`.
    pub fn step_times(&self, index: usize) -> Result<(f64, f64)> {
        if index == 0 || index > self.n_scales {
            return Err(Error::invalid(format!(
                "step index {index} outside 1..={}",
                self.n_scales
            )));
        }
        let n = self.n_scales as f64;
        Ok(((index as f64 - 1.0) / n, index as f64 / n))
    }
}

/// Optimizer and objective knobs for score-model training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub weighting: Weighting,
}

/// Loss weighting λ(t). σ² turns the regression target into the unit-variance
/// noise −Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    SigmaSq,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) || b == 0.0 {
                return Err(Error::invalid(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 2,
            steps: 2000,
            weighting: Weighting::SigmaSq,
        }
    }
}

pub(crate) fn standard_normal_like(
    shape: (usize, usize, usize),
    rng: &mut ChaCha8Rng,
) -> Array3<f64> {
    Array3::from_shape_fn(shape, |_| rng.sample(StandardNormal))
}

/// Forward VE perturbation `x_t = x_0 + σ(t)·Z`; returns the noise draw for
/// loss computation. Deterministic under the seed.
pub fn perturb(
    x0: &Array3<f64>,
    t: f64,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<(Array3<f64>, Array3<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturb_with(x0, t, schedule, &mut rng)
}

pub(crate) fn perturb_with(
    x0: &Array3<f64>,
    t: f64,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<(Array3<f64>, Array3<f64>)> {
    let sigma = schedule.sigma(t)?;
    let z = standard_normal_like(x0.dim(), rng);
    let x_t = x0 + &(&z * sigma);
    Ok((x_t, z))
}

/// One perturbation draw for a training item: time, scale, noisy input, and
/// the conditional-score target `−Z/σ = ∇ log p_t(x_t | x_0)`.
pub(crate) struct PerturbationSample {
    pub t: f64,
    pub sigma: f64,
    pub x_t: Array3<f64>,
    pub target: Array3<f64>,
}

/// Shared sampling path for [`dsm_loss`] and gradient evaluation, so both
/// see identical draws for a given seed.
pub(crate) fn sample_batch(
    batch: &[Array3<f64>],
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Vec<PerturbationSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    batch
        .iter()
        .map(|x0| {
            let t: f64 = rng.gen();
            let (x_t, z) = perturb_with(x0, t, schedule, &mut rng)?;
            let sigma = schedule.sigma(t)?;
            let target = z.mapv(|v| -v / sigma);
            Ok(PerturbationSample {
                t,
                sigma,
                x_t,
                target,
            })
        })
        .collect()
}

/// Denoising score matching loss: mean over the batch of
/// `σ(t)²·‖s_θ(x_t, t) − (−Z/σ(t))‖²` with per-item uniform t.
pub fn dsm_loss(
    model: &dyn ScoreModel,
    batch: &[Array3<f64>],
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("dsm_loss requires a non-empty batch"));
    }
    let samples = sample_batch(batch, schedule, seed)?;
    let mut total = 0.0;
    for s in &samples {
        let score = model.evaluate(&s.x_t, s.t)?;
        let sq: f64 = score
            .iter()
            .zip(s.target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += s.sigma * s.sigma * sq;
    }
    Ok(total / samples.len() as f64)
}

/// Reverse-diffusion predictor step from scale `t_hi` down to `t_lo`:
/// `x' = x + (σ_hi² − σ_lo²)·s_θ(x, t_hi) + √(σ_hi² − σ_lo²)·Z`.
pub fn predictor_step(
    x: &Array3<f64>,
    t_index: usize,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<Array3<f64>> {
    let z = standard_normal_like(x.dim(), rng);
    predictor_step_with_noise(x, t_index, model, schedule, &z)
}

/// Predictor step with an explicit noise draw (zeroed in deterministic
/// harnesses).
pub fn predictor_step_with_noise(
    x: &Array3<f64>,
    t_index: usize,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    z: &Array3<f64>,
) -> Result<Array3<f64>> {
    let (t_lo, t_hi) = schedule.step_times(t_index)?;
    let sigma_hi = schedule.sigma(t_hi)?;
    let sigma_lo = schedule.sigma(t_lo)?;
    let diff = sigma_hi * sigma_hi - sigma_lo * sigma_lo;
    let score = model.evaluate(x, t_hi)?;
    Ok(x + &(&score * diff) + &(z * diff.sqrt()))
}

/// Langevin corrector at the post-predictor scale `t_lo`:
/// `x' = x + ε·s_θ(x, t) + √(2ε)·Z` with the signal-to-noise step rule
/// `ε = 2·(snr·‖Z‖/‖s_θ‖)²`, recomputed per call. A vanishing score norm
/// forces ε = 0 and leaves the state untouched.
pub fn corrector_step(
    x: &Array3<f64>,
    t_index: usize,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    snr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Array3<f64>> {
    let z = standard_normal_like(x.dim(), rng);
    corrector_step_with_noise(x, t_index, model, schedule, snr, &z)
}

/// Corrector step with an explicit noise draw.
pub fn corrector_step_with_noise(
    x: &Array3<f64>,
    t_index: usize,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    snr: f64,
    z: &Array3<f64>,
) -> Result<Array3<f64>> {
    if !(snr.is_finite() && snr > 0.0) {
        return Err(Error::invalid("snr must be a positive real"));
    }
    let (t_lo, _) = schedule.step_times(t_index)?;
    let score = model.evaluate(x, t_lo)?;
    let score_norm = score.iter().map(|v| v * v).sum::<f64>().sqrt();
    if score_norm == 0.0 {
        return Ok(x.clone());
    }
    let noise_norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let eps = 2.0 * (snr * noise_norm / score_norm).powi(2);
    Ok(x + &(&score * eps) + &(z * (2.0 * eps).sqrt()))
}

/// Full predictor-corrector trajectory: start from `σ_max`-scaled noise and
/// anneal down the discretized schedule, running `corrector_loops` Langevin
/// refinements after every predictor step.
pub fn pc_sample(
    shape: (usize, usize, usize),
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    corrector_loops: usize,
    snr: f64,
    seed: u64,
) -> Result<Array3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = standard_normal_like(shape, &mut rng);
    let sigma_max = schedule.sigma(1.0)?;
    x.mapv_inplace(|v| v * sigma_max);
    for index in (1..=schedule.n_scales).rev() {
        x = predictor_step(&x, index, model, schedule, &mut rng)?;
        for _ in 0..corrector_loops {
            x = corrector_step(&x, index, model, schedule, snr, &mut rng)?;
        }
    }
    Ok(x)
}

/// Adam optimizer state over a flat list of parameter tensors.
struct Adam {
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
    step: usize,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(params: &[ArrayD<f64>], cfg: &TrainingConfig) -> Self {
        Adam {
            m: params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect(),
            v: params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect(),
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: 1e-8,
        }
    }

    fn update(&mut self, params: &mut [ArrayD<f64>], grads: &[ArrayD<f64>]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}

/// Train a score model with Adam over shuffled mini-batches of the dataset.
/// Returns the per-step loss trace; aborts on a non-finite loss.
pub fn train(
    model: &mut dyn ScoreModel,
    dataset: &[Array3<f64>],
    cfg: &TrainingConfig,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !model.trainable() {
        return Err(Error::NotTrainable);
    }
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    let mut params = model.parameters();
    let mut adam = Adam::new(&params, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = Vec::new();
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if order.is_empty() {
                order = (0..dataset.len()).collect();
                use rand::seq::SliceRandom;
                order.shuffle(&mut rng);
            }
            batch.push(dataset[order.pop().expect("refilled above")].clone());
        }
        let step_seed: u64 = rng.gen();
        let (loss, grads) = model.loss_gradients(&batch, schedule, step_seed)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, value: loss });
        }
        adam.update(&mut params, &grads);
        model.set_parameters(&params)?;
        trace.push(loss);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests;
