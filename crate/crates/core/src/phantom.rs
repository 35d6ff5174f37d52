//! Synthetic complex-valued test images and dataset handling, so every
//! experiment runs without access to scanner data.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{fft2c, ifft2c, ComplexGrid};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    SheppLogan,
    GaussianBlobs,
    SmoothRandom,
}

impl PhantomKind {
    pub fn name(&self) -> &'static str {
        match self {
            PhantomKind::SheppLogan => "shepp-logan",
            PhantomKind::GaussianBlobs => "gaussian-blobs",
            PhantomKind::SmoothRandom => "smooth-random",
        }
    }
}

/// Modified Shepp-Logan ellipse table: intensity, semi-axes (a, b), center
/// (x0, y0), rotation in degrees, on the [-1, 1]² square.
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Build a synthetic phantom, normalized to a maximum magnitude of 1.
/// The Shepp-Logan phantom ignores the seed and is purely real.
pub fn make_phantom(kind: PhantomKind, size: usize, seed: u64) -> Result<ComplexGrid> {
    if size < 16 {
        return Err(Error::invalid("phantoms need at least 16 px per axis"));
    }
    let grid = match kind {
        PhantomKind::SheppLogan => shepp_logan(size),
        PhantomKind::GaussianBlobs => gaussian_blobs(size, seed),
        PhantomKind::SmoothRandom => smooth_random(size, seed)?,
    };
    normalize(grid)
}

fn normalize(data: Array2<Complex64>) -> Result<ComplexGrid> {
    let peak = data.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::invalid("degenerate all-zero phantom"));
    }
    ComplexGrid::new(data.mapv(|v| v / peak))
}

fn shepp_logan(size: usize) -> Array2<Complex64> {
    let scale = 2.0 / size as f64;
    Array2::from_shape_fn((size, size), |(r, c)| {
        let x = (c as f64 + 0.5) * scale - 1.0;
        let y = 1.0 - (r as f64 + 0.5) * scale;
        let mut v = 0.0;
        for (amp, a, b, x0, y0, deg) in SHEPP_LOGAN {
            let phi = deg.to_radians();
            let (dx, dy) = (x - x0, y - y0);
            let xr = dx * phi.cos() + dy * phi.sin();
            let yr = -dx * phi.sin() + dy * phi.cos();
            if (xr / a).powi(2) + (yr / b).powi(2) <= 1.0 {
                v += amp;
            }
        }
        Complex64::new(v.max(0.0), 0.0)
    })
}

fn gaussian_blobs(size: usize, seed: u64) -> Array2<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_blobs = rng.gen_range(3..=8);
    let blobs: Vec<(f64, f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            let cx = rng.gen_range(0.15..0.85) * size as f64;
            let cy = rng.gen_range(0.15..0.85) * size as f64;
            let sx = rng.gen_range(0.05..0.20) * size as f64;
            let sy = rng.gen_range(0.05..0.20) * size as f64;
            let amp = rng.gen_range(0.3..1.0);
            (cx, cy, sx, sy, amp)
        })
        .collect();
    // low-order random phase surface keeps the field smooth
    let (p0, px, py, pxy) = (
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    Array2::from_shape_fn((size, size), |(r, c)| {
        let x = c as f64;
        let y = r as f64;
        let mut mag = 0.0;
        for &(cx, cy, sx, sy, amp) in &blobs {
            let dx = (x - cx) / sx;
            let dy = (y - cy) / sy;
            mag += amp * (-(dx * dx + dy * dy) / 2.0).exp();
        }
        let u = 2.0 * x / size as f64 - 1.0;
        let v = 2.0 * y / size as f64 - 1.0;
        let phase = std::f64::consts::PI * (p0 + px * u + py * v + pxy * u * v);
        mag * Complex64::new(0.0, phase).exp()
    })
}

fn smooth_random(size: usize, seed: u64) -> Result<Array2<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = ComplexGrid::from_fn(size, size, |_| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })?;
    let k = fft2c(&noise)?;
    // Gaussian low-pass around the centered DC bin
    let (cy, cx) = (size / 2, size / 2);
    let cutoff = size as f64 / 8.0;
    let filtered = Array2::from_shape_fn((size, size), |(r, c)| {
        let d2 = (r as f64 - cy as f64).powi(2) + (c as f64 - cx as f64).powi(2);
        k.data()[[r, c]] * (-d2 / (2.0 * cutoff * cutoff)).exp()
    });
    Ok(ifft2c(&ComplexGrid::new(filtered)?)?.into_data())
}

/// Provenance of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub kind: String,
    pub seed: u64,
    pub count: usize,
    pub height: usize,
    pub width: usize,
}

/// A list of same-sized complex grids plus its provenance record.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<ComplexGrid>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn new(items: Vec<ComplexGrid>, manifest: DatasetManifest) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::invalid("dataset must hold at least one item"));
        }
        let dim = items[0].dim();
        if items.iter().any(|g| g.dim() != dim) {
            return Err(Error::invalid("dataset items must share dimensions"));
        }
        Ok(Dataset { items, manifest })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Generate `count` phantoms with per-item seeds drawn from `seed`.
pub fn make_dataset(kind: PhantomKind, count: usize, size: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::invalid("dataset count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (0..count)
        .map(|_| make_phantom(kind, size, rng.gen()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        manifest: DatasetManifest {
            kind: kind.name().to_string(),
            seed,
            count,
            height: size,
            width: size,
        },
        items,
    })
}

fn flip_h(g: &ComplexGrid) -> ComplexGrid {
    let (h, w) = g.dim();
    ComplexGrid::from_fn(h, w, |(r, c)| g.data()[[r, w - 1 - c]]).expect("finite")
}

fn flip_v(g: &ComplexGrid) -> ComplexGrid {
    let (h, w) = g.dim();
    ComplexGrid::from_fn(h, w, |(r, c)| g.data()[[h - 1 - r, c]]).expect("finite")
}

fn rot90(g: &ComplexGrid) -> ComplexGrid {
    let (h, w) = g.dim();
    ComplexGrid::from_fn(w, h, |(r, c)| g.data()[[c, w - 1 - r]]).expect("finite")
}

/// Expand the dataset with flips and right-angle rotations. With both
/// enabled every item maps to its full 8-element dihedral orbit (duplicates
/// are kept). Rotations require square grids.
pub fn augment(ds: &Dataset, flips: bool, rotations: bool) -> Result<Dataset> {
    let (h, w) = ds.items[0].dim();
    if rotations && h != w {
        return Err(Error::invalid("rotation augmentation requires square grids"));
    }
    let mut items = Vec::new();
    for item in &ds.items {
        match (flips, rotations) {
            (false, false) => items.push(item.clone()),
            (true, false) => {
                items.push(item.clone());
                items.push(flip_h(item));
                items.push(flip_v(item));
            }
            (false, true) => {
                let mut cur = item.clone();
                for _ in 0..4 {
                    items.push(cur.clone());
                    cur = rot90(&cur);
                }
            }
            (true, true) => {
                for base in [item.clone(), flip_h(item)] {
                    let mut cur = base;
                    for _ in 0..4 {
                        items.push(cur.clone());
                        cur = rot90(&cur);
                    }
                }
            }
        }
    }
    let count = items.len();
    Dataset::new(
        items,
        DatasetManifest {
            count,
            ..ds.manifest.clone()
        },
    )
}

/// Directory layout: one KSP1 file per item plus a `manifest.txt`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, item) in ds.items.iter().enumerate() {
        io::write_grid(&dir.join(format!("item_{i:05}.ksp1")), item)?;
    }
    let m = &ds.manifest;
    let text = format!(
        "generator = {}\nseed = {}\ncount = {}\nheight = {}\nwidth = {}\n",
        m.kind, m.seed, m.count, m.height, m.width
    );
    fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

/// Load a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_text = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut kind = String::new();
    let mut seed = 0u64;
    let mut count = 0usize;
    let mut height = 0usize;
    let mut width = 0usize;
    for line in manifest_text.lines() {
        if let Some((key, value)) = line.split_once('=') {
            let (key, value) = (key.trim(), value.trim());
            match key {
                "generator" => kind = value.to_string(),
                "seed" => seed = value.parse().map_err(|_| Error::invalid("bad seed"))?,
                "count" => count = value.parse().map_err(|_| Error::invalid("bad count"))?,
                "height" => height = value.parse().map_err(|_| Error::invalid("bad height"))?,
                "width" => width = value.parse().map_err(|_| Error::invalid("bad width"))?,
                _ => {}
            }
        }
    }
    let items = (0..count)
        .map(|i| io::read_grid(&dir.join(format!("item_{i:05}.ksp1"))))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        items,
        DatasetManifest {
            kind,
            seed,
            count,
            height,
            width,
        },
    )
}
