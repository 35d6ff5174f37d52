//! Image quality metrics in the reporting format used throughout: PSNR,
//! SSIM, and MSE computed on magnitude images normalized by the reference
//! maximum, plus the `PSNR/SSIM/MSE(×10⁴)` table cell emitters.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;

/// Sentinel PSNR for an exact match (mse = 0).
pub const PSNR_CAP_DB: f64 = 300.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    /// Peak signal-to-noise ratio in dB, capped at [`PSNR_CAP_DB`].
    pub psnr: f64,
    /// Mean structural similarity in [-1, 1].
    pub ssim: f64,
    /// Mean squared error on the normalized magnitude scale (raw units;
    /// tables report it multiplied by 10⁴).
    pub mse: f64,
}

impl MetricsRow {
    /// Cell in the `PSNR/SSIM/MSE(×10⁴)` table format, e.g.
    /// `41.93/0.9582/0.641`.
    pub fn cell(&self) -> String {
        format!("{:.2}/{:.4}/{:.3}", self.psnr, self.ssim, self.mse * 1e4)
    }
}

/// Compare a reconstruction against a reference. Both are reduced to
/// magnitudes and scaled by `1/max(|reference|)`; PSNR uses a unit peak.
pub fn evaluate(recon: &ComplexGrid, reference: &ComplexGrid) -> Result<MetricsRow> {
    if recon.dim() != reference.dim() {
        return Err(Error::ShapeMismatch {
            context: "metrics::evaluate",
            lh: recon.height(),
            lw: recon.width(),
            rh: reference.height(),
            rw: reference.width(),
        });
    }
    let peak = reference.max_magnitude();
    if peak == 0.0 {
        return Err(Error::invalid("reference image is identically zero"));
    }
    let a = recon.data().mapv(|v| v.norm() / peak);
    let b = reference.data().mapv(|v| v.norm() / peak);

    let mse = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    let psnr = if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    };
    let ssim = mean_ssim(&a, &b);
    Ok(MetricsRow { psnr, ssim, mse })
}

/// Gaussian-weighted local SSIM averaged over all positions where the full
/// window fits. Grids smaller than 11 px fall back to the largest odd
/// window that fits.
fn mean_ssim(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let (h, w) = a.dim();
    let mut win = SSIM_WINDOW.min(h).min(w);
    if win % 2 == 0 {
        win -= 1;
    }
    let half = win / 2;
    let kernel = gaussian_kernel(win, SSIM_SIGMA);

    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);

    let mut total = 0.0;
    let mut count = 0usize;
    for cy in half..h - half {
        for cx in half..w - half {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            for dy in 0..win {
                for dx in 0..win {
                    let wgt = kernel[[dy, dx]];
                    mu_a += wgt * a[[cy + dy - half, cx + dx - half]];
                    mu_b += wgt * b[[cy + dy - half, cx + dx - half]];
                }
            }
            let mut var_a = 0.0;
            let mut var_b = 0.0;
            let mut cov = 0.0;
            for dy in 0..win {
                for dx in 0..win {
                    let wgt = kernel[[dy, dx]];
                    let da = a[[cy + dy - half, cx + dx - half]] - mu_a;
                    let db = b[[cy + dy - half, cx + dx - half]] - mu_b;
                    var_a += wgt * da * da;
                    var_b += wgt * db * db;
                    cov += wgt * da * db;
                }
            }
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    total / count as f64
}

fn gaussian_kernel(size: usize, sigma: f64) -> Array2<f64> {
    let half = (size / 2) as isize;
    let mut kernel = Array2::zeros((size, size));
    let mut sum = 0.0;
    for y in 0..size {
        for x in 0..size {
            let dy = y as isize - half;
            let dx = x as isize - half;
            let v = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
            kernel[[y, x]] = v;
            sum += v;
        }
    }
    kernel.mapv_inplace(|v| v / sum);
    kernel
}

/// Emit an aligned text table; `rows` pair a label with a metrics cell per
/// column.
pub fn format_table(columns: &[String], rows: &[(String, Vec<MetricsRow>)]) -> String {
    let mut label_width = 0usize;
    for (label, _) in rows {
        label_width = label_width.max(label.len());
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, r)| r.iter().map(|m| m.cell()).collect())
        .collect();
    let mut col_width = vec![0usize; columns.len()];
    for (i, c) in columns.iter().enumerate() {
        col_width[i] = c.len();
    }
    for row in &cells {
        for (i, cell) in row.iter().enumerate() {
            col_width[i] = col_width[i].max(cell.len());
        }
    }
    let mut out = String::new();
    out.push_str(&format!("{:label_width$}", ""));
    for (i, c) in columns.iter().enumerate() {
        out.push_str(&format!("  {:>width$}", c, width = col_width[i]));
    }
    out.push('\n');
    for ((label, _), row) in rows.iter().zip(cells.iter()) {
        out.push_str(&format!("{label:label_width$}"));
        for (i, cell) in row.iter().enumerate() {
            out.push_str(&format!("  {:>width$}", cell, width = col_width[i]));
        }
        out.push('\n');
    }
    out
}
