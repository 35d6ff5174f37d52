//! Separable orthogonal 2D discrete wavelet transform with periodic
//! boundary extension, and the derived high-pass/low-pass operators that
//! zero out complementary subbands.
//!
//! Complex grids are filtered component-wise: the filter taps are real, so
//! arithmetic on `Complex64` lanes transforms the real and imaginary parts
//! independently.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveletFamily {
    Haar,
    Daubechies4,
}

impl WaveletFamily {
    /// Orthonormal analysis low-pass taps.
    fn lowpass_taps(self) -> Vec<f64> {
        match self {
            WaveletFamily::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletFamily::Daubechies4 => {
                // (1±√3)/(4√2) and (3±√3)/(4√2), Σh² = 1
                let s3 = 3f64.sqrt();
                let denom = 4.0 * std::f64::consts::SQRT_2;
                vec![
                    (1.0 + s3) / denom,
                    (3.0 + s3) / denom,
                    (3.0 - s3) / denom,
                    (1.0 - s3) / denom,
                ]
            }
        }
    }

    /// Quadrature-mirror high-pass taps `g[n] = (−1)^n h[L−1−n]`.
    fn highpass_taps(self) -> Vec<f64> {
        let h = self.lowpass_taps();
        let l = h.len();
        (0..l)
            .map(|n| {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sign * h[l - 1 - n]
            })
            .collect()
    }
}

/// Wavelet family plus decomposition depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub levels: usize,
}

impl WaveletSpec {
    pub fn new(family: WaveletFamily, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::invalid("decomposition depth must be at least 1"));
        }
        Ok(WaveletSpec { family, levels })
    }

    fn check_dims(&self, h: usize, w: usize) -> Result<()> {
        let div = 1usize << self.levels;
        if !h.is_multiple_of(div) || !w.is_multiple_of(div) || h / div == 0 || w / div == 0 {
            return Err(Error::IndivisibleDimensions {
                h,
                w,
                levels: self.levels,
            });
        }
        Ok(())
    }
}

/// The three detail subbands of one decomposition level. `lh` is low-pass
/// along width and high-pass along height; `hl` is the converse.
#[derive(Debug, Clone)]
pub struct DetailBands {
    pub lh: Array2<Complex64>,
    pub hl: Array2<Complex64>,
    pub hh: Array2<Complex64>,
}

/// Full multi-level decomposition. `details[0]` is the finest level; the
/// approximation is the coarsest LL band. Total coefficient count equals
/// the input H·W.
#[derive(Debug, Clone)]
pub struct SubbandSet {
    pub approximation: Array2<Complex64>,
    pub details: Vec<DetailBands>,
}

impl SubbandSet {
    pub fn coefficient_count(&self) -> usize {
        self.approximation.len() + self.details.iter().map(|d| 3 * d.lh.len()).sum::<usize>()
    }

    /// Copy with the approximation band zeroed (high-pass projection).
    pub fn without_approximation(&self) -> SubbandSet {
        SubbandSet {
            approximation: Array2::zeros(self.approximation.dim()),
            details: self.details.clone(),
        }
    }

    /// Copy with every detail band zeroed (low-pass projection).
    pub fn without_details(&self) -> SubbandSet {
        SubbandSet {
            approximation: self.approximation.clone(),
            details: self
                .details
                .iter()
                .map(|d| DetailBands {
                    lh: Array2::zeros(d.lh.dim()),
                    hl: Array2::zeros(d.hl.dim()),
                    hh: Array2::zeros(d.hh.dim()),
                })
                .collect(),
        }
    }
}

/// One periodic analysis step along a lane: `a[k] = Σ h[n]·x[(2k+n) mod N]`.
fn analyze_lane(x: &[Complex64], lo: &[f64], hi: &[f64], a: &mut [Complex64], d: &mut [Complex64]) {
    let n = x.len();
    let half = n / 2;
    for k in 0..half {
        let mut sa = Complex64::default();
        let mut sd = Complex64::default();
        for (t, (&l, &g)) in lo.iter().zip(hi.iter()).enumerate() {
            let v = x[(2 * k + t) % n];
            sa += v * l;
            sd += v * g;
        }
        a[k] = sa;
        d[k] = sd;
    }
}

/// Periodic synthesis: `x[m] = Σ_k a[k]·h[(m−2k) mod N] + d[k]·g[(m−2k) mod N]`.
fn synthesize_lane(a: &[Complex64], d: &[Complex64], lo: &[f64], hi: &[f64], x: &mut [Complex64]) {
    let half = a.len();
    let n = 2 * half;
    for v in x.iter_mut() {
        *v = Complex64::default();
    }
    for k in 0..half {
        for (t, (&l, &g)) in lo.iter().zip(hi.iter()).enumerate() {
            let m = (2 * k + t) % n;
            x[m] += a[k] * l + d[k] * g;
        }
    }
}

/// Single-level separable analysis: width first, then height.
fn analyze_2d(
    x: &Array2<Complex64>,
    lo: &[f64],
    hi: &[f64],
) -> (
    Array2<Complex64>,
    Array2<Complex64>,
    Array2<Complex64>,
    Array2<Complex64>,
) {
    let (h, w) = x.dim();
    let (hh2, wh2) = (h / 2, w / 2);

    // along width: rows -> (L | H) halves
    let mut low_w = Array2::zeros((h, wh2));
    let mut high_w = Array2::zeros((h, wh2));
    let mut a = vec![Complex64::default(); wh2];
    let mut d = vec![Complex64::default(); wh2];
    let mut lane = vec![Complex64::default(); w];
    for r in 0..h {
        for c in 0..w {
            lane[c] = x[[r, c]];
        }
        analyze_lane(&lane, lo, hi, &mut a, &mut d);
        for c in 0..wh2 {
            low_w[[r, c]] = a[c];
            high_w[[r, c]] = d[c];
        }
    }

    // along height
    let mut ll = Array2::zeros((hh2, wh2));
    let mut lh = Array2::zeros((hh2, wh2));
    let mut hl = Array2::zeros((hh2, wh2));
    let mut hh = Array2::zeros((hh2, wh2));
    let mut col = vec![Complex64::default(); h];
    let mut ca = vec![Complex64::default(); hh2];
    let mut cd = vec![Complex64::default(); hh2];
    for c in 0..wh2 {
        for r in 0..h {
            col[r] = low_w[[r, c]];
        }
        analyze_lane(&col, lo, hi, &mut ca, &mut cd);
        for r in 0..hh2 {
            ll[[r, c]] = ca[r];
            lh[[r, c]] = cd[r];
        }
        for r in 0..h {
            col[r] = high_w[[r, c]];
        }
        analyze_lane(&col, lo, hi, &mut ca, &mut cd);
        for r in 0..hh2 {
            hl[[r, c]] = ca[r];
            hh[[r, c]] = cd[r];
        }
    }
    (ll, lh, hl, hh)
}

/// Single-level separable synthesis, inverse of [`analyze_2d`].
fn synthesize_2d(
    ll: &Array2<Complex64>,
    bands: &DetailBands,
    lo: &[f64],
    hi: &[f64],
) -> Array2<Complex64> {
    let (hh2, wh2) = ll.dim();
    let (h, w) = (2 * hh2, 2 * wh2);

    // height first (inverting the second analysis pass)
    let mut low_w = Array2::zeros((h, wh2));
    let mut high_w = Array2::zeros((h, wh2));
    let mut ca = vec![Complex64::default(); hh2];
    let mut cd = vec![Complex64::default(); hh2];
    let mut col = vec![Complex64::default(); h];
    for c in 0..wh2 {
        for r in 0..hh2 {
            ca[r] = ll[[r, c]];
            cd[r] = bands.lh[[r, c]];
        }
        synthesize_lane(&ca, &cd, lo, hi, &mut col);
        for r in 0..h {
            low_w[[r, c]] = col[r];
        }
        for r in 0..hh2 {
            ca[r] = bands.hl[[r, c]];
            cd[r] = bands.hh[[r, c]];
        }
        synthesize_lane(&ca, &cd, lo, hi, &mut col);
        for r in 0..h {
            high_w[[r, c]] = col[r];
        }
    }

    // then width
    let mut out = Array2::zeros((h, w));
    let mut a = vec![Complex64::default(); wh2];
    let mut d = vec![Complex64::default(); wh2];
    let mut lane = vec![Complex64::default(); w];
    for r in 0..h {
        for c in 0..wh2 {
            a[c] = low_w[[r, c]];
            d[c] = high_w[[r, c]];
        }
        synthesize_lane(&a, &d, lo, hi, &mut lane);
        for c in 0..w {
            out[[r, c]] = lane[c];
        }
    }
    out
}

/// Multi-level 2D DWT. Requires H and W divisible by `2^levels`.
pub fn dwt2(x: &ComplexGrid, spec: &WaveletSpec) -> Result<SubbandSet> {
    spec.check_dims(x.height(), x.width())?;
    let lo = &spec.family.lowpass_taps();
    let hi = spec.family.highpass_taps();
    let mut current = x.data().clone();
    let mut details = Vec::with_capacity(spec.levels);
    for _ in 0..spec.levels {
        let (ll, lh, hl, hh) = analyze_2d(&current, lo, &hi);
        details.push(DetailBands { lh, hl, hh });
        current = ll;
    }
    Ok(SubbandSet {
        approximation: current,
        details,
    })
}

/// Exact inverse of [`dwt2`].
pub fn idwt2(s: &SubbandSet, spec: &WaveletSpec) -> Result<ComplexGrid> {
    if s.details.len() != spec.levels {
        return Err(Error::invalid(format!(
            "subband set has {} levels, spec expects {}",
            s.details.len(),
            spec.levels
        )));
    }
    let lo = &spec.family.lowpass_taps();
    let hi = spec.family.highpass_taps();
    let mut current = s.approximation.clone();
    for bands in s.details.iter().rev() {
        if bands.lh.dim() != current.dim() {
            return Err(Error::invalid("inconsistent subband dimensions"));
        }
        current = synthesize_2d(&current, bands, lo, &hi);
    }
    ComplexGrid::new(current)
}

/// High-pass operator: reconstruct with the approximation band nulled,
/// preserving only detail content.
pub fn highpass(x: &ComplexGrid, spec: &WaveletSpec) -> Result<ComplexGrid> {
    let s = dwt2(x, spec)?;
    idwt2(&s.without_approximation(), spec)
}

/// Low-pass operator: reconstruct from the approximation band alone.
pub fn lowpass(x: &ComplexGrid, spec: &WaveletSpec) -> Result<ComplexGrid> {
    let s = dwt2(x, spec)?;
    idwt2(&s.without_details(), spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{max_abs_diff, random_grid, rel_l2_diff};

    const SPECS: [(WaveletFamily, usize); 3] = [
        (WaveletFamily::Haar, 1),
        (WaveletFamily::Haar, 2),
        (WaveletFamily::Daubechies4, 2),
    ];

    #[test]
    fn perfect_reconstruction_both_families() {
        for (family, levels) in SPECS {
            let spec = WaveletSpec::new(family, levels).unwrap();
            for seed in 0..50 {
                let x = random_grid(32, 32, seed);
                let back = idwt2(&dwt2(&x, &spec).unwrap(), &spec).unwrap();
                let rel = rel_l2_diff(&back, &x);
                assert!(rel < 1e-10, "{family:?}/{levels}: rel {rel} at seed {seed}");
            }
        }
    }

    #[test]
    fn haar_constant_input_has_no_detail() {
        let spec = WaveletSpec::new(WaveletFamily::Haar, 1).unwrap();
        let c = Complex64::new(1.3, -0.4);
        let x = ComplexGrid::from_fn(8, 8, |_| c).unwrap();
        let s = dwt2(&x, &spec).unwrap();
        for v in s.approximation.iter() {
            assert!((v - c * 2.0).norm() < 1e-12, "approximation gain");
        }
        let d = &s.details[0];
        for band in [&d.lh, &d.hl, &d.hh] {
            for v in band.iter() {
                assert!(v.norm() < 1e-12);
            }
        }
    }

    // Hand-computed 2x2 orthonormal Haar butterfly as an independent oracle.
    #[test]
    fn haar_2x2_butterfly_oracle() {
        let (a, b, c, d) = (
            Complex64::new(1.0, 2.0),
            Complex64::new(-0.5, 0.3),
            Complex64::new(2.5, -1.0),
            Complex64::new(0.25, 0.75),
        );
        let x = ComplexGrid::new(ndarray::array![[a, b], [c, d]]).unwrap();
        let spec = WaveletSpec::new(WaveletFamily::Haar, 1).unwrap();
        let s = dwt2(&x, &spec).unwrap();
        let half = 0.5;
        assert!((s.approximation[[0, 0]] - (a + b + c + d) * half).norm() < 1e-14);
        assert!((s.details[0].lh[[0, 0]] - (a + b - c - d) * half).norm() < 1e-14);
        assert!((s.details[0].hl[[0, 0]] - (a - b + c - d) * half).norm() < 1e-14);
        assert!((s.details[0].hh[[0, 0]] - (a - b - c + d) * half).norm() < 1e-14);
    }

    #[test]
    fn subband_count_matches_input() {
        let spec = WaveletSpec::new(WaveletFamily::Daubechies4, 2).unwrap();
        let x = random_grid(16, 24, 9);
        let s = dwt2(&x, &spec).unwrap();
        assert_eq!(s.coefficient_count(), 16 * 24);
    }

    #[test]
    fn complementarity_high_plus_low_is_identity() {
        for (family, levels) in SPECS {
            let spec = WaveletSpec::new(family, levels).unwrap();
            let x = random_grid(16, 16, 11);
            let h = highpass(&x, &spec).unwrap();
            let l = lowpass(&x, &spec).unwrap();
            let sum = ComplexGrid::new(h.data() + l.data()).unwrap();
            assert!(rel_l2_diff(&sum, &x) < 1e-10);
        }
    }

    #[test]
    fn constant_input_passes_through_lowpass_only() {
        let spec = WaveletSpec::new(WaveletFamily::Haar, 2).unwrap();
        let x = ComplexGrid::from_fn(16, 16, |_| Complex64::new(0.8, 0.1)).unwrap();
        let h = highpass(&x, &spec).unwrap();
        let l = lowpass(&x, &spec).unwrap();
        assert!(h.max_magnitude() < 1e-12);
        assert!(max_abs_diff(l.data(), x.data()) < 1e-12);
    }

    // Oracle: explicit subband zeroing through the verified dwt2/idwt2 pair.
    #[test]
    fn impulse_decomposition_matches_subband_oracle() {
        let spec = WaveletSpec::new(WaveletFamily::Haar, 1).unwrap();
        let mut data: Array2<Complex64> = Array2::zeros((8, 8));
        data[[0, 0]] = Complex64::new(1.0, 0.0);
        let x = ComplexGrid::new(data).unwrap();

        let s = dwt2(&x, &spec).unwrap();
        let oracle_h = idwt2(&s.without_approximation(), &spec).unwrap();
        let oracle_l = idwt2(&s.without_details(), &spec).unwrap();

        let h = highpass(&x, &spec).unwrap();
        let l = lowpass(&x, &spec).unwrap();
        assert!(max_abs_diff(h.data(), oracle_h.data()) < 1e-12);
        assert!(max_abs_diff(l.data(), oracle_l.data()) < 1e-12);
        let sum = ComplexGrid::new(h.data() + l.data()).unwrap();
        assert!(max_abs_diff(sum.data(), x.data()) < 1e-10);
    }

    #[test]
    fn projection_idempotence() {
        for (family, levels) in SPECS {
            let spec = WaveletSpec::new(family, levels).unwrap();
            let x = random_grid(16, 16, 13);
            let l1 = lowpass(&x, &spec).unwrap();
            let l2 = lowpass(&l1, &spec).unwrap();
            assert!(rel_l2_diff(&l2, &l1) < 1e-10, "{family:?} L∘L = L");
            let h1 = highpass(&x, &spec).unwrap();
            let h2 = highpass(&h1, &spec).unwrap();
            let num: f64 = h2
                .data()
                .iter()
                .zip(h1.data().iter())
                .map(|(p, q)| (p - q).norm_sqr())
                .sum();
            assert!(num.sqrt() / x.norm2() < 1e-10, "{family:?} H∘H = H");
        }
    }

    #[test]
    fn linearity() {
        let spec = WaveletSpec::new(WaveletFamily::Daubechies4, 1).unwrap();
        let x = random_grid(16, 16, 17);
        let y = random_grid(16, 16, 18);
        let (a, b) = (Complex64::new(1.5, 0.0), Complex64::new(-0.7, 0.2));
        let combo = ComplexGrid::new(x.data() * a + y.data() * b).unwrap();
        let lhs = highpass(&combo, &spec).unwrap();
        let rhs = highpass(&x, &spec).unwrap().data() * a + highpass(&y, &spec).unwrap().data() * b;
        assert!(max_abs_diff(lhs.data(), &rhs) < 1e-10);
    }

    #[test]
    fn indivisible_dimensions_rejected() {
        let spec = WaveletSpec::new(WaveletFamily::Haar, 3).unwrap();
        let x = random_grid(12, 16, 19);
        match dwt2(&x, &spec) {
            Err(Error::IndivisibleDimensions { h: 12, w: 16, levels: 3 }) => {}
            other => panic!("expected IndivisibleDimensions, got {other:?}"),
        }
    }
}
