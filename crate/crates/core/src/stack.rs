//! Hybrid multi-channel stacking: masked k-space channels are split into
//! real/imaginary planes and stacked into one C×H×W real tensor for the
//! score network, then collapsed back to a single complex k-space.

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;
use crate::mask::{apply_mask, AdaptiveMask, HybridMaskSet};

/// Position of the low-frequency channel `k_L` relative to the high
/// channels `k_H1 … k_HN`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowSlot {
    Before,
    Middle,
    After,
}

/// Role of one complex channel in the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelRole {
    Low,
    High(usize),
}

/// Orders `n_high + 1` complex channels; each contributes two real planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelLayout {
    pub low_slot: LowSlot,
    pub n_high: usize,
}

impl ChannelLayout {
    pub fn new(low_slot: LowSlot, n_high: usize) -> Result<Self> {
        if n_high == 0 {
            return Err(Error::invalid("layout requires at least one high channel"));
        }
        Ok(ChannelLayout { low_slot, n_high })
    }

    pub fn n_complex(&self) -> usize {
        self.n_high + 1
    }

    pub fn n_planes(&self) -> usize {
        2 * self.n_complex()
    }

    /// Index of the low channel among the complex channels.
    pub fn low_index(&self) -> usize {
        match self.low_slot {
            LowSlot::Before => 0,
            LowSlot::Middle => self.n_high / 2,
            LowSlot::After => self.n_high,
        }
    }

    /// Channel roles in stacking order.
    pub fn roles(&self) -> Vec<ChannelRole> {
        let low_at = self.low_index();
        let mut roles = Vec::with_capacity(self.n_complex());
        let mut high = 0;
        for slot in 0..self.n_complex() {
            if slot == low_at {
                roles.push(ChannelRole::Low);
            } else {
                roles.push(ChannelRole::High(high));
                high += 1;
            }
        }
        roles
    }
}

/// C×H×W real tensor of interleaved real/imaginary planes, C = 2·(n_high+1).
/// Plane `2i` holds the real part of complex channel `i`, plane `2i+1` the
/// imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedTensor {
    data: Array3<f64>,
    layout: ChannelLayout,
}

impl StackedTensor {
    pub fn new(data: Array3<f64>, layout: ChannelLayout) -> Result<Self> {
        let (c, _, _) = data.dim();
        if c != layout.n_planes() {
            return Err(Error::ChannelMismatch {
                expected: layout.n_planes(),
                got: c,
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "StackedTensor",
            });
        }
        Ok(StackedTensor { data, layout })
    }

    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn n_planes(&self) -> usize {
        self.data.dim().0
    }

    pub fn grid_dim(&self) -> (usize, usize) {
        let (_, h, w) = self.data.dim();
        (h, w)
    }

    /// Complex channel `i` reassembled from planes `2i` and `2i+1`.
    pub fn complex_channel(&self, i: usize) -> ComplexGrid {
        let (h, w) = self.grid_dim();
        let re = self.data.index_axis(ndarray::Axis(0), 2 * i);
        let im = self.data.index_axis(ndarray::Axis(0), 2 * i + 1);
        let data = Array2::from_shape_fn((h, w), |idx| Complex64::new(re[idx], im[idx]));
        ComplexGrid::new(data).expect("finite by construction")
    }
}

/// Split a complex grid into its real and imaginary planes.
pub fn split_complex(k: &ComplexGrid) -> (Array2<f64>, Array2<f64>) {
    (k.data().mapv(|v| v.re), k.data().mapv(|v| v.im))
}

/// Lossless inverse of [`split_complex`].
pub fn merge_complex(re: &Array2<f64>, im: &Array2<f64>) -> Result<ComplexGrid> {
    if re.dim() != im.dim() {
        return Err(Error::ShapeMismatch {
            context: "merge_complex",
            lh: re.nrows(),
            lw: re.ncols(),
            rh: im.nrows(),
            rw: im.ncols(),
        });
    }
    ComplexGrid::new(Array2::from_shape_fn(re.dim(), |idx| {
        Complex64::new(re[idx], im[idx])
    }))
}

/// Masks of the hybrid set in the order the layout stacks the channels.
pub fn masks_in_layout_order<'a>(
    masks: &'a HybridMaskSet,
    layout: &ChannelLayout,
) -> Result<Vec<&'a AdaptiveMask>> {

    if masks.n_high() != layout.n_high {
        return Err(Error::ChannelMismatch {
            expected: layout.n_high,
            got: masks.n_high(),
        });
    }
    Ok(layout
        .roles()
        .iter()
        .map(|role| match role {
            ChannelRole::Low => &masks.low,
            ChannelRole::High(i) => &masks.highs[*i],
        })
        .collect())
}

/// Build the stacked tensor: each complex channel is `k ⊙ M` for its mask,
/// split into real/imaginary planes and placed per the layout.
pub fn stack_hybrid(
    k: &ComplexGrid,
    masks: &HybridMaskSet,
    layout: &ChannelLayout,
) -> Result<StackedTensor> {
    let ordered = masks_in_layout_order(masks, layout)?;
    let channels = ordered
        .iter()
        .map(|m| apply_mask(k, m))
        .collect::<Result<Vec<_>>>()?;
    stack_channels(&channels, layout)
}

/// Stack already-built complex channels (layout order) into plane form.
pub fn stack_channels(channels: &[ComplexGrid], layout: &ChannelLayout) -> Result<StackedTensor> {
    if channels.len() != layout.n_complex() {
        return Err(Error::ChannelMismatch {
            expected: layout.n_complex(),
            got: channels.len(),
        });
    }
    let (h, w) = channels[0].dim();
    for ch in channels {
        channels[0].same_shape(ch, "stack_channels")?;
    }
    let mut data = Array3::zeros((layout.n_planes(), h, w));
    for (i, ch) in channels.iter().enumerate() {
        for ((r, c), v) in ch.data().indexed_iter() {
            data[[2 * i, r, c]] = v.re;
            data[[2 * i + 1, r, c]] = v.im;
        }
    }
    StackedTensor::new(data, *layout)
}

/// Reassemble the complex channels in layout order.
pub fn unstack(t: &StackedTensor) -> Vec<ComplexGrid> {
    (0..t.layout().n_complex())
        .map(|i| t.complex_channel(i))
        .collect()
}

/// Arithmetic mean of the complex channels.
pub fn channel_mean(t: &StackedTensor) -> ComplexGrid {
    let channels = unstack(t);
    mean_of_channels(&channels)
}

fn mean_of_channels(channels: &[ComplexGrid]) -> ComplexGrid {
    let (h, w) = channels[0].dim();
    let scale = 1.0 / channels.len() as f64;
    let mut acc: Array2<Complex64> = Array2::zeros((h, w));
    for ch in channels {
        acc += ch.data();
    }
    acc.mapv_inplace(|v| v * scale);
    ComplexGrid::new(acc).expect("finite by construction")
}

/// Mask-weighted recombination: per pixel, average only the channels whose
/// mask covers it, normalized by the coverage count; pixels covered by no
/// mask fall back to the plain mean.
pub fn mask_weighted_mean(t: &StackedTensor, masks: &HybridMaskSet) -> Result<ComplexGrid> {
    let layout = t.layout();
    let ordered = masks_in_layout_order(masks, &layout)?;
    let channels = unstack(t);
    let (h, w) = channels[0].dim();
    if masks.dim() != (h, w) {
        return Err(Error::ShapeMismatch {
            context: "mask_weighted_mean",
            lh: h,
            lw: w,
            rh: masks.dim().0,
            rw: masks.dim().1,
        });
    }
    let plain = mean_of_channels(&channels);
    let mut out: Array2<Complex64> = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = Complex64::default();
            let mut coverage = 0u32;
            for (ch, m) in channels.iter().zip(ordered.iter()) {
                if m.grid()[[r, c]] == 1 {
                    acc += ch.data()[[r, c]];
                    coverage += 1;
                }
            }
            out[[r, c]] = if coverage > 0 {
                acc / coverage as f64
            } else {
                plain.data()[[r, c]]
            };
        }
    }
    ComplexGrid::new(out)
}
