//! Undersampling pattern generators: 2D pointwise random, variable-density
//! Poisson-disc, and equiangular radial spokes, each calibrated to a target
//! acceleration factor with a fully-sampled central square.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::SamplingMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    Random2D,
    Poisson,
    Radial,
}

/// Pattern request: kind, target acceleration factor R > 1, the fraction of
/// `min(H, W)` used as the side of the fully-sampled central square, and the
/// seed that makes generation deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub target_r: f64,
    pub center_fraction: f64,
    pub seed: u64,
}

impl PatternSpec {
    pub fn new(kind: PatternKind, target_r: f64, center_fraction: f64, seed: u64) -> Result<Self> {
        if !(target_r.is_finite() && target_r > 1.0) {
            return Err(Error::invalid("target acceleration factor must exceed 1"));
        }
        if !(0.0..1.0).contains(&center_fraction) {
            return Err(Error::invalid("center_fraction must lie in [0, 1)"));
        }
        Ok(PatternSpec {
            kind,
            target_r,
            center_fraction,
            seed,
        })
    }
}

/// AF tolerance per kind (relative to target).
fn af_tolerance(kind: PatternKind) -> f64 {
    match kind {
        PatternKind::Random2D | PatternKind::Poisson => 0.05,
        PatternKind::Radial => 0.10,
    }
}

/// Entries of the forced central square, centered on the DC convention
/// `(⌊H/2⌋, ⌊W/2⌋)`.
fn center_square(height: usize, width: usize, fraction: f64) -> Array2<u8> {
    let mut grid = Array2::zeros((height, width));
    let side = ((fraction * height.min(width) as f64).round() as usize).min(height.min(width));
    if side == 0 {
        return grid;
    }
    let (cy, cx) = (height / 2, width / 2);
    let top = cy.saturating_sub(side / 2);
    let left = cx.saturating_sub(side / 2);
    for r in top..(top + side).min(height) {
        for c in left..(left + side).min(width) {
            grid[[r, c]] = 1;
        }
    }
    grid
}

fn popcount(grid: &Array2<u8>) -> usize {
    grid.iter().filter(|&&e| e == 1).count()
}

fn within_tolerance(achieved_ones: usize, total: usize, target_r: f64, tol: f64) -> bool {
    let af = total as f64 / achieved_ones as f64;
    af >= (1.0 - tol) * target_r && af <= (1.0 + tol) * target_r
}

/// Generate a sampling mask matching the spec. Deterministic per seed.
pub fn generate_pattern(spec: &PatternSpec, height: usize, width: usize) -> Result<SamplingMask> {
    if height < 2 || width < 2 {
        return Err(Error::invalid("pattern grids need at least 2 px per axis"));
    }
    let total = height * width;
    let target_ones = total as f64 / spec.target_r;
    let tol = af_tolerance(spec.kind);
    let center = center_square(height, width, spec.center_fraction);
    let center_ones = popcount(&center);
    // highest reachable AF tolerance bound: the center alone may already
    // exceed the sampling budget
    if (center_ones as f64) > target_ones / (1.0 - tol) {
        return Err(Error::UnreachableAcceleration {
            target_r: spec.target_r,
            reason: format!(
                "central square holds {center_ones} samples but the budget at R={} is {:.1}",
                spec.target_r, target_ones
            ),
        });
    }
    let grid = match spec.kind {
        PatternKind::Random2D => random2d(&center, height, width, target_ones, spec.seed),
        PatternKind::Poisson => poisson(&center, height, width, target_ones, spec.seed),
        PatternKind::Radial => radial(&center, height, width, target_ones, spec.seed),
    };
    let ones = popcount(&grid);
    if ones == 0 || !within_tolerance(ones, total, spec.target_r, tol) {
        return Err(Error::UnreachableAcceleration {
            target_r: spec.target_r,
            reason: format!(
                "calibration achieved {ones} samples (AF {:.3}) outside ±{:.0}% of target",
                total as f64 / ones.max(1) as f64,
                tol * 100.0
            ),
        });
    }
    SamplingMask::new(grid)
}

/// Bernoulli field thresholded against a fixed uniform draw; bisection on
/// the density reuses the same field, so the popcount is monotone in p.
fn random2d(
    center: &Array2<u8>,
    height: usize,
    width: usize,
    target_ones: f64,
    seed: u64,
) -> Array2<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field: Array2<f64> = Array2::from_shape_fn((height, width), |_| rng.gen::<f64>());
    let build = |p: f64| -> Array2<u8> {
        Array2::from_shape_fn((height, width), |idx| {
            u8::from(center[idx] == 1 || field[idx] < p)
        })
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = build(target_ones / (height * width) as f64);
    let mut best_err = (popcount(&best) as f64 - target_ones).abs();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let cand = build(mid);
        let ones = popcount(&cand) as f64;
        let err = (ones - target_ones).abs();
        if err < best_err {
            best_err = err;
            best = cand;
        }
        if ones < target_ones {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// Variable-density radius: half the base at the k-space center, the full
/// base at the rim.
fn poisson_local_radius(r: usize, c: usize, height: usize, width: usize, base: f64) -> f64 {
    let (cy, cx) = (height as f64 / 2.0, width as f64 / 2.0);
    let max_dist = (cy * cy + cx * cx).sqrt();
    let d = (((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt()) / max_dist;
    base * (0.5 + 0.5 * d)
}

/// Greedy dart throwing in a seeded candidate order with a radius that
/// shrinks toward the k-space center; bisection on the base radius
/// calibrates the achieved acceleration.
fn poisson(
    center: &Array2<u8>,
    height: usize,
    width: usize,
    target_ones: f64,
    seed: u64,
) -> Array2<u8> {
    poisson_calibrated(center, height, width, target_ones, seed).0
}

/// Poisson generation that also reports the calibrated base radius, so the
/// minimum-distance property can be audited against the radius actually
/// used.
pub(crate) fn poisson_calibrated(
    center: &Array2<u8>,
    height: usize,
    width: usize,
    target_ones: f64,
    seed: u64,
) -> (Array2<u8>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<(usize, usize)> = (0..height)
        .flat_map(|r| (0..width).map(move |c| (r, c)))
        .filter(|&idx| center[[idx.0, idx.1]] == 0)
        .collect();
    candidates.shuffle(&mut rng);

    let local_radius =
        |r: usize, c: usize, base: f64| -> f64 { poisson_local_radius(r, c, height, width, base) };

    let build = |base: f64| -> Array2<u8> {
        let mut grid = center.clone();
        let mut accepted: Vec<(usize, usize, f64)> = Vec::new();
        let cell = base.max(1.0);
        let cols = (width as f64 / cell).ceil() as usize + 1;
        let rows = (height as f64 / cell).ceil() as usize + 1;
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); rows * cols];
        let bucket_of = |r: usize, c: usize| -> usize {
            (r as f64 / cell) as usize * cols + (c as f64 / cell) as usize
        };
        for &(r, c) in &candidates {
            let rad = local_radius(r, c, base);
            let br = (r as f64 / cell) as usize;
            let bc = (c as f64 / cell) as usize;
            let mut ok = true;
            'scan: for dr in br.saturating_sub(2)..=(br + 2).min(rows - 1) {
                for dc in bc.saturating_sub(2)..=(bc + 2).min(cols - 1) {
                    for &i in &buckets[dr * cols + dc] {
                        let (pr, pc, prad) = accepted[i];
                        let dist2 = (r as f64 - pr as f64).powi(2) + (c as f64 - pc as f64).powi(2);
                        let min_rad = rad.min(prad);
                        if dist2 < min_rad * min_rad {
                            ok = false;
                            break 'scan;
                        }
                    }
                }
            }
            if ok {
                buckets[bucket_of(r, c)].push(accepted.len());
                accepted.push((r, c, rad));
                grid[[r, c]] = 1;
            }
        }
        grid
    };

    let (mut lo, mut hi) = (0.5f64, height.max(width) as f64);
    let mut best_base = 1.5f64;
    let mut best = build(best_base);
    let mut best_err = (popcount(&best) as f64 - target_ones).abs();
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let cand = build(mid);
        let ones = popcount(&cand) as f64;
        let err = (ones - target_ones).abs();
        if err < best_err {
            best_err = err;
            best = cand;
            best_base = mid;
        }
        if ones > target_ones {
            lo = mid; // too dense -> widen the radius
        } else {
            hi = mid;
        }
    }
    (best, best_base)
}

/// Equiangular center-crossing spokes; the spoke count is searched to reach
/// the target acceleration. Every spoke passes through the DC pixel.
fn radial(
    center: &Array2<u8>,
    height: usize,
    width: usize,
    target_ones: f64,
    seed: u64,
) -> Array2<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.gen::<f64>() * std::f64::consts::PI;
    let build = |spokes: usize| -> Array2<u8> {
        let mut grid = center.clone();
        let (cy, cx) = (height / 2, width / 2);
        let reach = ((height * height + width * width) as f64).sqrt();
        let steps = (2.0 * reach).ceil() as i64;
        for j in 0..spokes {
            let theta = offset + std::f64::consts::PI * j as f64 / spokes as f64;
            let (dy, dx) = (theta.sin(), theta.cos());
            for s in -steps..=steps {
                let t = s as f64 * 0.5;
                let r = cy as f64 + t * dy;
                let c = cx as f64 + t * dx;
                let (ri, ci) = (r.round() as i64, c.round() as i64);
                if ri >= 0 && ri < height as i64 && ci >= 0 && ci < width as i64 {
                    grid[[ri as usize, ci as usize]] = 1;
                }
            }
        }
        grid
    };

    // exponential search for an upper bracket, then bisection on the count
    let mut hi = 1usize;
    let mut hi_ones = popcount(&build(hi));
    let cap = 16 * (height + width);
    while (hi_ones as f64) < target_ones && hi < cap {
        hi *= 2;
        let ones = popcount(&build(hi));
        if ones == hi_ones && hi > 2 * (height + width) {
            break; // saturated: more spokes stop adding pixels
        }
        hi_ones = ones;
    }
    let mut lo = 1usize;
    let mut best = build(hi);
    let mut best_err = (popcount(&best) as f64 - target_ones).abs();
    while lo < hi {
        let mid = (lo + hi) / 2;
        let cand = build(mid);
        let ones = popcount(&cand) as f64;
        let err = (ones - target_ones).abs();
        if err < best_err {
            best_err = err;
            best = cand;
        }
        if ones < target_ones {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    best
}
