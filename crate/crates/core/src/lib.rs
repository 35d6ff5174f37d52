//! Adaptive mask-guided k-space diffusion reconstruction.
//!
//! The library covers the full desk-scale pipeline: complex k-space grids
//! with centered orthonormal FFTs ([`grid`]), wavelet high/low-pass
//! operators ([`wavelet`]), adaptive frequency masks derived from wavelet
//! residuals ([`mask`]), hybrid multi-channel stacking of masked k-space
//! ([`stack`]), VE-SDE score models with predictor-corrector sampling
//! ([`sde`]), the closed-loop iterative reconstruction with data
//! consistency ([`recon`]), undersampling pattern generators ([`pattern`]),
//! image quality metrics ([`metrics`]), and synthetic phantom data
//! ([`phantom`]). File formats live in [`io`].

pub mod error;
pub mod grid;
#[cfg(test)]
pub(crate) mod test_util;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod pattern;
pub mod phantom;
pub mod recon;
pub mod sde;
pub mod stack;
pub mod wavelet;

pub use error::{Error, Result};
pub use grid::{apply_sampling, fft2c, ifft2c, zero_filled, ComplexGrid, Measurement, SamplingMask};
pub use mask::{
    apply_mask, frequency_residuals, generate_masks, refresh_masks, AdaptiveMask, HybridMaskSet,
    MaskKind, ThresholdMode, ThresholdRange,
};
pub use metrics::{evaluate, MetricsRow};
pub use pattern::{generate_pattern, PatternKind, PatternSpec};
pub use phantom::{augment, make_phantom, Dataset, PhantomKind};
pub use recon::{
    data_consistency, masked_model_update, reconstruct, DcPlacement, MaskRanges, Recombine,
    ReconConfig, ReconOutput, ReconState,
};
pub use sde::{
    corrector_step, dsm_loss, pc_sample, perturb, predictor_step, train, AnalyticGaussianScore,
    NoiseSchedule, ScoreModel, TinyDenoiser, TrainingConfig,
};
pub use stack::{
    channel_mean, mask_weighted_mean, merge_complex, split_complex, stack_hybrid, unstack,
    ChannelLayout, ChannelRole, LowSlot, StackedTensor,
};
pub use wavelet::{dwt2, highpass, idwt2, lowpass, SubbandSet, WaveletFamily, WaveletSpec};
