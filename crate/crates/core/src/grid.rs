//! Complex image/k-space grids, centered orthonormal Fourier transforms,
//! the undersampling forward model `y = m ⊙ (k + η)`, and the zero-filled
//! baseline reconstruction.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// An H×W complex-valued array serving as both image and k-space
/// representation. All values are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    data: Array2<Complex64>,
}

impl ComplexGrid {
    pub fn new(data: Array2<Complex64>) -> Result<Self> {
        let (h, w) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        if !data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite {
                context: "ComplexGrid",
            });
        }
        Ok(ComplexGrid { data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        ComplexGrid {
            data: Array2::zeros((height, width)),
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        f: impl FnMut((usize, usize)) -> Complex64,
    ) -> Result<Self> {
        Self::new(Array2::from_shape_fn((height, width), f))
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    /// Elementwise magnitudes.
    pub fn magnitude(&self) -> Array2<f64> {
        self.data.mapv(|v| v.norm())
    }

    /// Largest elementwise magnitude.
    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Euclidean (Frobenius) norm over all entries.
    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub(crate) fn same_shape(&self, other: &ComplexGrid, context: &'static str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeMismatch {
                context,
                lh: self.height(),
                lw: self.width(),
                rh: other.height(),
                rw: other.width(),
            });
        }
        Ok(())
    }
}

/// Binary undersampling matrix `m` of the forward model. At least one entry
/// is 1 so the acceleration factor is well-defined.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    entries: Array2<u8>,
}

impl SamplingMask {
    pub fn new(entries: Array2<u8>) -> Result<Self> {
        if entries.iter().any(|&e| e > 1) {
            return Err(Error::invalid("sampling mask entries must be 0 or 1"));
        }
        if !entries.iter().any(|&e| e == 1) {
            return Err(Error::invalid(
                "sampling mask must select at least one entry",
            ));
        }
        Ok(SamplingMask { entries })
    }

    pub fn all_ones(height: usize, width: usize) -> Self {
        SamplingMask {
            entries: Array2::ones((height, width)),
        }
    }

    pub fn height(&self) -> usize {
        self.entries.nrows()
    }

    pub fn width(&self) -> usize {
        self.entries.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn entries(&self) -> &Array2<u8> {
        &self.entries
    }

    pub fn is_sampled(&self, row: usize, col: usize) -> bool {
        self.entries[[row, col]] == 1
    }

    /// Number of sampled locations.
    pub fn popcount(&self) -> usize {
        self.entries.iter().filter(|&&e| e == 1).count()
    }

    /// Acceleration factor `AF = H·W / popcount`.
    pub fn acceleration(&self) -> f64 {
        (self.height() * self.width()) as f64 / self.popcount() as f64
    }
}

/// Under-sampled k-space measurement: `y` is zero wherever the mask is zero.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub y: ComplexGrid,
    pub mask: SamplingMask,
    pub noise_std: f64,
}

impl Measurement {
    pub fn new(y: ComplexGrid, mask: SamplingMask, noise_std: f64) -> Result<Self> {
        if y.dim() != mask.dim() {
            return Err(Error::ShapeMismatch {
                context: "Measurement",
                lh: y.height(),
                lw: y.width(),
                rh: mask.height(),
                rw: mask.width(),
            });
        }
        if noise_std < 0.0 || !noise_std.is_finite() {
            return Err(Error::invalid("noise_std must be a nonnegative finite real"));
        }
        let consistent = Zip::from(y.data())
            .and(mask.entries())
            .all(|v, &m| m == 1 || (v.re == 0.0 && v.im == 0.0));
        if !consistent {
            return Err(Error::invalid(
                "measurement must be zero at unsampled positions",
            ));
        }
        Ok(Measurement { y, mask, noise_std })
    }
}

/// Rotate each axis right by `floor(n/2)`, moving the DC bin to the grid
/// center `(⌊H/2⌋, ⌊W/2⌋)`.
fn fftshift(data: &Array2<Complex64>) -> Array2<Complex64> {
    roll(data, data.nrows() / 2, data.ncols() / 2)
}

/// Inverse of [`fftshift`] for both even and odd axis lengths.
fn ifftshift(data: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = data.dim();
    roll(data, h - h / 2, w - w / 2)
}

fn roll(data: &Array2<Complex64>, down: usize, right: usize) -> Array2<Complex64> {
    let (h, w) = data.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        data[[(r + h - down % h) % h, (c + w - right % w) % w]]
    })
}

fn fft2_inplace(data: &mut Array2<Complex64>, inverse: bool) {
    let (h, w) = data.dim();
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for mut row in data.rows_mut() {
        let buf = row.as_slice_mut().expect("row-major grid");
        row_fft.process(buf);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut col_buf = vec![Complex64::default(); h];
    for c in 0..w {
        for r in 0..h {
            col_buf[r] = data[[r, c]];
        }
        col_fft.process(&mut col_buf);
        for r in 0..h {
            data[[r, c]] = col_buf[r];
        }
    }
}

fn centered_fft(grid: &ComplexGrid, inverse: bool) -> Result<ComplexGrid> {
    let (h, w) = grid.dim();
    if h < 2 || w < 2 {
        return Err(Error::invalid("FFT requires at least 2 samples per axis"));
    }
    let mut data = ifftshift(grid.data());
    fft2_inplace(&mut data, inverse);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut shifted = fftshift(&data);
    shifted.mapv_inplace(|v| v * scale);
    ComplexGrid::new(shifted)
}

/// Centered 2D DFT with orthonormal `1/√(HW)` scaling. The DC component
/// lands at `(⌊H/2⌋, ⌊W/2⌋)` and `ifft2c(fft2c(x)) = x`.
pub fn fft2c(img: &ComplexGrid) -> Result<ComplexGrid> {
    centered_fft(img, false)
}

/// Inverse of [`fft2c`], with the same centering and scaling conventions.
pub fn ifft2c(k: &ComplexGrid) -> Result<ComplexGrid> {
    centered_fft(k, true)
}

/// Forward model `y = m ⊙ (k + η)` with circularly-symmetric complex
/// Gaussian noise of total standard deviation `noise_std` (each part has
/// std `noise_std/√2`). Deterministic for a fixed seed.
pub fn apply_sampling(
    k: &ComplexGrid,
    mask: &SamplingMask,
    noise_std: f64,
    seed: u64,
) -> Result<Measurement> {
    if k.dim() != mask.dim() {
        return Err(Error::ShapeMismatch {
            context: "apply_sampling",
            lh: k.height(),
            lw: k.width(),
            rh: mask.height(),
            rw: mask.width(),
        });
    }
    if noise_std < 0.0 || !noise_std.is_finite() {
        return Err(Error::invalid("noise_std must be a nonnegative finite real"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let part_std = noise_std / std::f64::consts::SQRT_2;
    let mut y = Array2::zeros(k.dim());
    Zip::indexed(&mut y)
        .and(k.data())
        .and(mask.entries())
        .for_each(|_, out, &v, &m| {
            // draw in fixed order so the field is identical for every mask
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            if m == 1 {
                *out = v + Complex64::new(re * part_std, im * part_std);
            }
        });
    Measurement::new(ComplexGrid::new(y)?, mask.clone(), noise_std)
}

/// Baseline reconstruction: the inverse transform of the measured k-space
/// with zeros at unmeasured locations.
pub fn zero_filled(meas: &Measurement) -> Result<ComplexGrid> {
    ifft2c(&meas.y)
}
