//! The pluggable score-function interface and the closed-form Gaussian
//! oracle used to verify the samplers.

use ndarray::{Array3, ArrayD};

use super::NoiseSchedule;
use crate::error::{Error, Result};

/// A score estimator `s_θ(x, t) ≈ ∇_x log p_t(x)`. Output shape always
/// equals input shape. Evaluation is read-only and safe to share across
/// threads; training mutates parameters and needs a single writer.
pub trait ScoreModel: Send + Sync {
    fn evaluate(&self, x: &Array3<f64>, t: f64) -> Result<Array3<f64>>;

    fn trainable(&self) -> bool {
        false
    }

    /// Snapshot of the parameter tensors (empty for fixed models).
    fn parameters(&self) -> Vec<ArrayD<f64>> {
        Vec::new()
    }

    fn set_parameters(&mut self, params: &[ArrayD<f64>]) -> Result<()> {
        let _ = params;
        Err(Error::NotTrainable)
    }

    /// DSM loss plus parameter gradients for one batch. Fixed models reject
    /// the gradient request.
    fn loss_gradients(
        &self,
        batch: &[Array3<f64>],
        schedule: &NoiseSchedule,
        seed: u64,
    ) -> Result<(f64, Vec<ArrayD<f64>>)> {
        let (_, _, _) = (batch, schedule, seed);
        Err(Error::NotTrainable)
    }
}

/// Exact score of a VE-perturbed isotropic Gaussian:
/// `s(x, t) = −(x − μ)/(base_var + σ(t)²)`. Serves as the analytic oracle
/// for sampler statistics and as the desk-scale surrogate score in
/// reconstruction tests.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianScore {
    mean: Array3<f64>,
    base_var: f64,
    schedule: NoiseSchedule,
}

impl AnalyticGaussianScore {
    pub fn new(mean: Array3<f64>, base_var: f64, schedule: NoiseSchedule) -> Result<Self> {
        if !(base_var.is_finite() && base_var > 0.0) {
            return Err(Error::invalid("base_var must be a positive real"));
        }
        Ok(AnalyticGaussianScore {
            mean,
            base_var,
            schedule,
        })
    }

    pub fn mean(&self) -> &Array3<f64> {
        &self.mean
    }
}

impl ScoreModel for AnalyticGaussianScore {
    fn evaluate(&self, x: &Array3<f64>, t: f64) -> Result<Array3<f64>> {
        if x.dim() != self.mean.dim() {
            return Err(Error::ChannelMismatch {
                expected: self.mean.dim().0,
                got: x.dim().0,
            });
        }
        let sigma = self.schedule.sigma(t)?;
        let denom = self.base_var + sigma * sigma;
        Ok((&self.mean - x) / denom)
    }
}

/// Score that is identically zero; degenerate baseline for sampler and
/// reconstruction contracts that must hold regardless of the model.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroScore;

impl ScoreModel for ZeroScore {
    fn evaluate(&self, x: &Array3<f64>, _t: f64) -> Result<Array3<f64>> {
        Ok(Array3::zeros(x.dim()))
    }
}
