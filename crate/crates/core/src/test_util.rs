//! Shared helpers for unit tests.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::grid::ComplexGrid;

/// Tolerance for exact f64 pipelines (FFT round trips, unitarity).
pub const MAX_REL: f64 = 1e-12;

pub fn random_grid(h: usize, w: usize, seed: u64) -> ComplexGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexGrid::from_fn(h, w, |_| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
    .unwrap()
}

pub fn random_planes(c: usize, h: usize, w: usize, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn((c, h, w), |_| rng.sample(StandardNormal))
}

pub fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn rel_l2_diff(a: &ComplexGrid, b: &ComplexGrid) -> f64 {
    let num: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    num.sqrt() / b.norm2().max(f64::MIN_POSITIVE)
}
