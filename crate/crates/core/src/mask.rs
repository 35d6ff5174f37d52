//! Adaptive binary frequency masks generated by thresholding wavelet
//! residuals of the current k-space, and their application. The low mask
//! selects on `|k − H(k)|`, each high mask on `|k − L(k)|`; thresholds are
//! either absolute values or empirical quantiles of the residual map.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;
use crate::wavelet::{highpass, lowpass, WaveletSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    Absolute,
    Quantile,
}

/// Closed threshold interval `[lo, hi]`. In `Absolute` mode `hi` may be
/// `f64::INFINITY`; in `Quantile` mode both bounds live in `[0, 1]` and are
/// resolved against the residual map they select from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRange {
    lo: f64,
    hi: f64,
    mode: ThresholdMode,
}

impl ThresholdRange {
    pub fn absolute(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && lo >= 0.0) {
            return Err(Error::invalid("threshold lo must be finite and nonnegative"));
        }
        if hi.is_nan() || hi < lo {
            return Err(Error::invalid("threshold hi must satisfy lo <= hi"));
        }
        Ok(ThresholdRange {
            lo,
            hi,
            mode: ThresholdMode::Absolute,
        })
    }

    pub fn quantile(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
            return Err(Error::invalid("quantile bounds must lie in [0, 1]"));
        }
        if hi < lo {
            return Err(Error::invalid("threshold hi must satisfy lo <= hi"));
        }
        Ok(ThresholdRange {
            lo,
            hi,
            mode: ThresholdMode::Quantile,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mode(&self) -> ThresholdMode {
        self.mode
    }

    /// Bounds as absolute residual values. Quantile bounds resolve to the
    /// order statistic at index `min(⌊q·n⌋, n−1)` of the sorted residuals,
    /// which makes `[0.5, 1.0]` select exactly the upper median set.
    fn resolve(&self, residuals: &Array2<f64>) -> (f64, f64) {
        match self.mode {
            ThresholdMode::Absolute => (self.lo, self.hi),
            ThresholdMode::Quantile => {
                let mut sorted: Vec<f64> = residuals.iter().copied().collect();
                sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
                (
                    empirical_quantile(&sorted, self.lo),
                    empirical_quantile(&sorted, self.hi),
                )
            }
        }
    }
}

fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).floor() as usize).min(n - 1);
    sorted[idx]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Selects on the low-frequency residual `|k − H(k)|`.
    LowSelect,
    /// Selects on the high-frequency residual `|k − L(k)|`.
    HighSelect,
}

/// Binary frequency-selection mask. Binary diagonal operators are their own
/// Hermitian transpose, so adjoint application equals plain application.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveMask {
    kind: MaskKind,
    grid: Array2<u8>,
    source_thresholds: ThresholdRange,
}

impl AdaptiveMask {
    pub fn new(kind: MaskKind, grid: Array2<u8>, source_thresholds: ThresholdRange) -> Result<Self> {
        if grid.iter().any(|&e| e > 1) {
            return Err(Error::invalid("adaptive mask entries must be 0 or 1"));
        }
        Ok(AdaptiveMask {
            kind,
            grid,
            source_thresholds,
        })
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn grid(&self) -> &Array2<u8> {
        &self.grid
    }

    pub fn source_thresholds(&self) -> &ThresholdRange {
        &self.source_thresholds
    }

    pub fn dim(&self) -> (usize, usize) {
        self.grid.dim()
    }

    pub fn popcount(&self) -> usize {
        self.grid.iter().filter(|&&e| e == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.popcount() == 0
    }
}

/// The low mask `M_L` plus one or more high masks of different strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridMaskSet {
    pub low: AdaptiveMask,
    pub highs: Vec<AdaptiveMask>,
}

impl HybridMaskSet {
    pub fn n_high(&self) -> usize {
        self.highs.len()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.low.dim()
    }

    /// Human-readable warnings for degenerate (all-zero) masks. Empty masks
    /// are legitimate; downstream masked updates degenerate to the identity.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.low.is_empty() {
            out.push("low mask selects no entries".to_string());
        }
        for (i, m) in self.highs.iter().enumerate() {
            if m.is_empty() {
                out.push(format!("high mask {} selects no entries", i + 1));
            }
        }
        out
    }
}

/// Elementwise residual magnitudes `(|k − H(k)|, |k − L(k)|)`. By the
/// complementarity of the filter pair these equal `|L(k)|` and `|H(k)|`.
pub fn frequency_residuals(
    k: &ComplexGrid,
    spec: &WaveletSpec,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let h = highpass(k, spec)?;
    let l = lowpass(k, spec)?;
    let low_res = Array2::from_shape_fn(k.dim(), |idx| (k.data()[idx] - h.data()[idx]).norm());
    let high_res = Array2::from_shape_fn(k.dim(), |idx| (k.data()[idx] - l.data()[idx]).norm());
    Ok((low_res, high_res))
}

fn threshold_mask(
    kind: MaskKind,
    residuals: &Array2<f64>,
    range: &ThresholdRange,
) -> Result<AdaptiveMask> {
    let (lo, hi) = range.resolve(residuals);
    let grid = residuals.mapv(|r| u8::from(r >= lo && r <= hi));
    AdaptiveMask::new(kind, grid, *range)
}

/// Generate the hybrid mask set from the wavelet residuals of `k`.
///
/// All-zero masks are permitted; query [`HybridMaskSet::warnings`] to
/// surface them.
pub fn generate_masks(
    k: &ComplexGrid,
    spec: &WaveletSpec,
    low_range: &ThresholdRange,
    high_ranges: &[ThresholdRange],
) -> Result<HybridMaskSet> {
    if high_ranges.is_empty() {
        return Err(Error::invalid("at least one high threshold range required"));
    }
    let (low_res, high_res) = frequency_residuals(k, spec)?;
    let low = threshold_mask(MaskKind::LowSelect, &low_res, low_range)?;
    let highs = high_ranges
        .iter()
        .map(|r| threshold_mask(MaskKind::HighSelect, &high_res, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(HybridMaskSet { low, highs })
}

/// Re-derive the masks against the latest k-space estimate. Called once per
/// outer reconstruction iteration, after the data-consistency step. In
/// quantile mode the absolute thresholds re-resolve against the new residual
/// distribution.
pub fn refresh_masks(
    current_k: &ComplexGrid,
    spec: &WaveletSpec,
    low_range: &ThresholdRange,
    high_ranges: &[ThresholdRange],
) -> Result<HybridMaskSet> {
    generate_masks(current_k, spec, low_range, high_ranges)
}

/// Elementwise mask application `k ⊙ M`.
pub fn apply_mask(k: &ComplexGrid, m: &AdaptiveMask) -> Result<ComplexGrid> {
    if k.dim() != m.dim() {
        return Err(Error::ShapeMismatch {
            context: "apply_mask",
            lh: k.height(),
            lw: k.width(),
            rh: m.dim().0,
            rw: m.dim().1,
        });
    }
    let data = ndarray::Zip::from(k.data())
        .and(m.grid())
        .map_collect(|&v, &e| if e == 1 { v } else { num_complex::Complex64::default() });
    ComplexGrid::new(data)
}
