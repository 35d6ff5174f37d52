//! Closed-loop iterative reconstruction: cascaded score models on stacked
//! masked channels, mask-gated channel updates, channel collapse, and the
//! closed-form data-consistency step.

use ndarray::Array3;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{ifft2c, ComplexGrid, Measurement};
use crate::mask::{generate_masks, refresh_masks, AdaptiveMask, HybridMaskSet, ThresholdRange};
use crate::metrics;
use crate::sde::{
    corrector_step, predictor_step, AnalyticGaussianScore, NoiseSchedule, ScoreModel,
};
use crate::stack::{
    channel_mean, mask_weighted_mean, stack_channels, unstack, ChannelLayout, ChannelRole,
    LowSlot, StackedTensor,
};
use crate::wavelet::WaveletSpec;

/// When the data-consistency step runs: after every outer iteration (the
/// robust closed-loop default) or once after the loop finishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcPlacement {
    PerIteration,
    FinalOnly,
}

/// Channel collapse rule: plain arithmetic mean, or coverage-normalized
/// averaging weighted by the adaptive masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recombine {
    Mean,
    MaskWeighted,
}

/// Threshold configuration for the low mask and each high mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRanges {
    pub low: ThresholdRange,
    pub highs: Vec<ThresholdRange>,
}

impl MaskRanges {
    /// Data-adaptive quantile defaults: the low mask keeps the top 30% of
    /// the low-band residual; the high masks spread from the top 50% to the
    /// top 25% of the high-band residual.
    pub fn defaults(n_high: usize) -> Result<Self> {
        if n_high == 0 {
            return Err(Error::invalid("need at least one high mask"));
        }
        let low = ThresholdRange::quantile(0.70, 1.0)?;
        let highs = (0..n_high)
            .map(|i| {
                let lo = if n_high == 1 {
                    0.50
                } else {
                    0.50 + 0.25 * i as f64 / (n_high as f64 - 1.0)
                };
                ThresholdRange::quantile(lo, 1.0)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MaskRanges { low, highs })
    }

    pub fn n_high(&self) -> usize {
        self.highs.len()
    }
}

/// Every knob of the iterative reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    /// Data-consistency weight μ; zero replaces sampled entries outright.
    pub mu: f64,
    /// Outer iterations T. Each runs both cascade stages, so the sampler
    /// schedule is discretized into 2T descending scale steps.
    pub outer_steps: usize,
    /// Corrector (Langevin) loops per predictor step.
    pub corrector_loops: usize,
    pub snr: f64,
    pub schedule: NoiseSchedule,
    pub wavelet: WaveletSpec,
    pub mask_ranges: MaskRanges,
    pub layout_d1: ChannelLayout,
    pub layout_d2: ChannelLayout,
    pub recombine: Recombine,
    pub dc: DcPlacement,
    pub seed: u64,
}

impl ReconConfig {
    /// Desk-scale defaults for a given high-channel count: the cascade
    /// layouts `{H1, L, H2}` / `{L, H1, H2}`, quantile mask defaults,
    /// per-iteration data consistency with μ = 0, and one corrector loop.
    pub fn desk_default(n_high: usize, outer_steps: usize, seed: u64) -> Result<Self> {
        Ok(ReconConfig {
            mu: 0.0,
            outer_steps,
            corrector_loops: 1,
            snr: 0.16,
            schedule: NoiseSchedule::new(0.01, 378.0, 1000)?,
            wavelet: WaveletSpec::new(crate::wavelet::WaveletFamily::Haar, 2)?,
            mask_ranges: MaskRanges::defaults(n_high)?,
            layout_d1: ChannelLayout::new(LowSlot::Middle, n_high)?,
            layout_d2: ChannelLayout::new(LowSlot::Before, n_high)?,
            recombine: Recombine::Mean,
            dc: DcPlacement::PerIteration,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_steps == 0 {
            return Err(Error::invalid("outer_steps must be at least 1"));
        }
        if self.corrector_loops == 0 {
            return Err(Error::invalid("corrector_loops must be at least 1"));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::invalid("mu must be a nonnegative real"));
        }
        if !(self.snr.is_finite() && self.snr > 0.0) {
            return Err(Error::invalid("snr must be positive"));
        }
        let n = self.mask_ranges.n_high();
        if n != self.layout_d1.n_high || n != self.layout_d2.n_high {
            return Err(Error::ChannelMismatch {
                expected: self.layout_d1.n_high,
                got: n,
            });
        }
        Ok(())
    }
}

/// Per-iteration quality measurements against the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
}

/// Loop state snapshot returned with the reconstruction.
#[derive(Debug, Clone)]
pub struct ReconState {
    /// Final stacked tensor in the D1 layout.
    pub tensor: StackedTensor,
    /// Masks after the last refresh.
    pub masks: HybridMaskSet,
    /// Outer iterations executed.
    pub iterations: usize,
    /// Metrics per outer iteration, when a reference was supplied.
    pub trace: Vec<IterationMetrics>,
    /// Degenerate-mask warnings collected across the run.
    pub mask_warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ReconOutput {
    pub kspace: ComplexGrid,
    pub image: ComplexGrid,
    pub state: ReconState,
}

/// Fold a model's channel output back into the running estimate: inside the
/// mask support the model output replaces the previous value, outside it the
/// previous value is untouched (binary masks are self-adjoint, so the
/// adjoint-gated update reduces to an elementwise select).
pub fn masked_model_update(
    k: &ComplexGrid,
    k_model: &ComplexGrid,
    m: &AdaptiveMask,
) -> Result<ComplexGrid> {
    k.same_shape(k_model, "masked_model_update")?;
    if k.dim() != m.dim() {
        return Err(Error::ShapeMismatch {
            context: "masked_model_update",
            lh: k.height(),
            lw: k.width(),
            rh: m.dim().0,
            rw: m.dim().1,
        });
    }
    let data = ndarray::Zip::from(k.data())
        .and(k_model.data())
        .and(m.grid())
        .map_collect(|&prev, &model, &e| if e == 1 { model } else { prev });
    ComplexGrid::new(data)
}

/// Closed-form minimizer of `‖m·k − y‖² + μ‖k − k_est‖²`, elementwise:
/// sampled entries become `(y + μ·k_est)/(1 + μ)`, unsampled entries keep
/// `k_est`. With μ = 0 sampled entries are replaced by the measurement
/// exactly.
pub fn data_consistency(k_est: &ComplexGrid, meas: &Measurement, mu: f64) -> Result<ComplexGrid> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::invalid("mu must be a nonnegative real"));
    }
    k_est.same_shape(&meas.y, "data_consistency")?;
    let data = ndarray::Zip::from(k_est.data())
        .and(meas.y.data())
        .and(meas.mask.entries())
        .map_collect(|&est, &y, &m| {
            if m == 1 {
                if mu == 0.0 {
                    y
                } else {
                    (y + est * mu) / (1.0 + mu)
                }
            } else {
                est
            }
        });
    ComplexGrid::new(data)
}

fn mask_for_role(masks: &HybridMaskSet, role: ChannelRole) -> &AdaptiveMask {
    match role {
        ChannelRole::Low => &masks.low,
        ChannelRole::High(i) => &masks.highs[i],
    }
}

fn noise_grid(h: usize, w: usize, scale: f64, rng: &mut ChaCha8Rng) -> ComplexGrid {
    let normal = StandardNormal;
    ComplexGrid::from_fn(h, w, |_| {
        Complex64::new(
            scale * <StandardNormal as Distribution<f64>>::sample(&normal, rng),
            scale * <StandardNormal as Distribution<f64>>::sample(&normal, rng),
        )
    })
    .expect("finite noise")
}

fn ensure_finite(x: &Array3<f64>, iteration: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { iteration })
    }
}

/// One predictor plus M corrector steps of one cascade stage on the plane
/// representation of `channels`.
#[allow(clippy::too_many_arguments)]
fn cascade_stage(
    channels: &[ComplexGrid],
    layout: &ChannelLayout,
    model: &dyn ScoreModel,
    sampler: &NoiseSchedule,
    index: usize,
    corrector_loops: usize,
    snr: f64,
    iteration: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ComplexGrid>> {
    let tensor = stack_channels(channels, layout)?;
    let mut x = tensor.into_data();
    x = predictor_step(&x, index, model, sampler, rng)?;
    for _ in 0..corrector_loops {
        x = corrector_step(&x, index, model, sampler, snr, rng)?;
    }
    ensure_finite(&x, iteration)?;
    Ok(unstack(&StackedTensor::new(x, *layout)?))
}

fn collapse(
    channels: &[ComplexGrid],
    layout: &ChannelLayout,
    masks: &HybridMaskSet,
    recombine: Recombine,
) -> Result<ComplexGrid> {
    let tensor = stack_channels(channels, layout)?;
    match recombine {
        Recombine::Mean => Ok(channel_mean(&tensor)),
        Recombine::MaskWeighted => mask_weighted_mean(&tensor, masks),
    }
}

/// Run the full closed-loop reconstruction.
///
/// Each outer iteration runs the D1 stage (predictor + correctors) on the
/// stacked channels, folds the outputs through the mask-gated update, runs
/// the D2 stage on the re-masked channels in its own layout, folds again,
/// collapses the channels, applies data consistency (in per-iteration
/// placement), and refreshes the masks against the new estimate. The two
/// stages of iteration i consume sampler steps 2i and 2i−1 of a 2T-step
/// discretization, so the trajectory anneals from σ_max to σ_min.
pub fn reconstruct(
    meas: &Measurement,
    d1: &dyn ScoreModel,
    d2: &dyn ScoreModel,
    cfg: &ReconConfig,
    reference: Option<&ComplexGrid>,
) -> Result<ReconOutput> {
    cfg.validate()?;
    let (h, w) = meas.y.dim();
    let t_outer = cfg.outer_steps;
    let sampler = cfg.schedule.with_scales(2 * t_outer)?;
    let sigma_max = sampler.sigma(1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let roles_d1 = cfg.layout_d1.roles();
    let roles_d2 = cfg.layout_d2.roles();

    let mut masks = generate_masks(&meas.y, &cfg.wavelet, &cfg.mask_ranges.low, &cfg.mask_ranges.highs)?;
    let mut warnings = masks.warnings();

    let mut trace = Vec::new();
    let record = |k_now: &ComplexGrid, iteration: usize, trace: &mut Vec<IterationMetrics>| -> Result<()> {
        if let Some(truth) = reference {
            let img = ifft2c(k_now)?;
            let row = metrics::evaluate(&img, truth)?;
            trace.push(IterationMetrics {
                iteration,
                psnr: row.psnr,
                ssim: row.ssim,
                mse: row.mse,
            });
        }
        Ok(())
    };

    // Per-channel estimates in D1 role order; in per-iteration placement the
    // cross-iteration state is the single collapsed estimate instead.
    let per_iteration = cfg.dc == DcPlacement::PerIteration;
    let mut k_cur = if per_iteration {
        noise_grid(h, w, sigma_max, &mut rng)
    } else {
        ComplexGrid::zeros(h, w)
    };
    let mut channels: Vec<ComplexGrid> = if per_iteration {
        Vec::new()
    } else {
        (0..roles_d1.len())
            .map(|_| noise_grid(h, w, sigma_max, &mut rng))
            .collect()
    };

    let mut iterations = 0usize;
    for i in (1..=t_outer).rev() {
        iterations += 1;
        let (idx1, idx2) = (2 * i, 2 * i - 1);

        // D1 stage input: masked channels of the collapsed estimate in
        // per-iteration placement, the raw persistent channels otherwise.
        let d1_in: Vec<ComplexGrid> = if per_iteration {
            roles_d1
                .iter()
                .map(|&r| crate::mask::apply_mask(&k_cur, mask_for_role(&masks, r)))
                .collect::<Result<Vec<_>>>()?
        } else {
            channels.clone()
        };
        let d1_out = cascade_stage(
            &d1_in,
            &cfg.layout_d1,
            d1,
            &sampler,
            idx1,
            cfg.corrector_loops,
            cfg.snr,
            i,
            &mut rng,
        )?;
        let base: Vec<ComplexGrid> = if per_iteration {
            vec![k_cur.clone(); roles_d1.len()]
        } else {
            channels.clone()
        };
        let mut updated: Vec<ComplexGrid> = Vec::with_capacity(roles_d1.len());
        for ((prev, out), &role) in base.iter().zip(d1_out.iter()).zip(roles_d1.iter()) {
            updated.push(masked_model_update(prev, out, mask_for_role(&masks, role))?);
        }

        // D2 stage in its own layout; inputs are the re-masked updated
        // channels in per-iteration placement, the raw channels otherwise.
        let d2_in: Vec<ComplexGrid> = roles_d2
            .iter()
            .map(|&role| {
                let j = roles_d1.iter().position(|&r| r == role).expect("same roles");
                if per_iteration {
                    crate::mask::apply_mask(&updated[j], mask_for_role(&masks, role))
                } else {
                    Ok(updated[j].clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let d2_out = cascade_stage(
            &d2_in,
            &cfg.layout_d2,
            d2,
            &sampler,
            idx2,
            cfg.corrector_loops,
            cfg.snr,
            i,
            &mut rng,
        )?;
        for (pos_d2, &role) in roles_d2.iter().enumerate() {
            let j = roles_d1.iter().position(|&r| r == role).expect("same roles");
            updated[j] =
                masked_model_update(&updated[j], &d2_out[pos_d2], mask_for_role(&masks, role))?;
        }

        let collapsed = collapse(&updated, &cfg.layout_d1, &masks, cfg.recombine)?;
        let k_view = if per_iteration {
            data_consistency(&collapsed, meas, cfg.mu)?
        } else {
            channels = updated.clone();
            collapsed
        };
        if per_iteration {
            k_cur = k_view.clone();
            channels = updated;
        }

        record(&k_view, iterations, &mut trace)?;
        masks = refresh_masks(&k_view, &cfg.wavelet, &cfg.mask_ranges.low, &cfg.mask_ranges.highs)?;
        for wmsg in masks.warnings() {
            let tagged = format!("iteration {iterations}: {wmsg}");
            if !warnings.contains(&tagged) {
                warnings.push(tagged);
            }
        }
    }

    let kspace = match cfg.dc {
        DcPlacement::PerIteration => k_cur,
        DcPlacement::FinalOnly => {
            let collapsed = collapse(&channels, &cfg.layout_d1, &masks, cfg.recombine)?;
            data_consistency(&collapsed, meas, cfg.mu)?
        }
    };
    let image = ifft2c(&kspace)?;
    let tensor = stack_channels(&channels, &cfg.layout_d1)?;
    Ok(ReconOutput {
        kspace,
        image,
        state: ReconState {
            tensor,
            masks,
            iterations,
            trace,
            mask_warnings: warnings,
        },
    })
}

/// Analytic Gaussian surrogate scores for the cascade: each stage's mean is
/// the fully-known k-space replicated into every channel of its layout. A
/// verification stand-in for trained networks.
pub fn analytic_surrogate_models(
    truth_k: &ComplexGrid,
    cfg: &ReconConfig,
    base_var: f64,
) -> Result<(AnalyticGaussianScore, AnalyticGaussianScore)> {
    let sampler = cfg.schedule.with_scales(2 * cfg.outer_steps)?;
    let build = |layout: &ChannelLayout| -> Result<AnalyticGaussianScore> {
        let channels = vec![truth_k.clone(); layout.n_complex()];
        let mean = stack_channels(&channels, layout)?.into_data();
        AnalyticGaussianScore::new(mean, base_var, sampler)
    };
    Ok((build(&cfg.layout_d1)?, build(&cfg.layout_d2)?))
}

/// Write a per-iteration metrics trace as `iteration,psnr,ssim,mse`.
pub fn write_trace_csv(path: &std::path::Path, trace: &[IterationMetrics]) -> Result<()> {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|m| {
            vec![
                m.iteration.to_string(),
                format!("{:.6}", m.psnr),
                format!("{:.6}", m.ssim),
                format!("{:.6e}", m.mse),
            ]
        })
        .collect();
    crate::io::write_csv(path, "iteration,psnr,ssim,mse", &rows)
}
