//! File formats: the KSP1 binary container for complex grids, masks, and
//! stacked tensors; P5 portable graymaps for mask visualization; and small
//! CSV writers for traces.
//!
//! KSP1 layout: magic bytes `"KSP1"`, little-endian `u32` height, `u32`
//! width, `u32` channel count C, then C·H·W pairs of little-endian `f64`
//! (real, imaginary), row-major within a channel, channel-major overall.
//! Sampling masks are stored with zero imaginary parts and real parts in
//! {0, 1}; stacked tensors store each real plane as one channel.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, SamplingMask};
use crate::stack::{ChannelLayout, StackedTensor};

const MAGIC: &[u8; 4] = b"KSP1";

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::BadFormat {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Write raw complex channels. All channels must share dimensions.
pub fn write_ksp1(path: &Path, channels: &[Array2<Complex64>]) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::invalid("KSP1 requires at least one channel"));
    }
    let (h, w) = channels[0].dim();
    for ch in channels {
        if ch.dim() != (h, w) {
            return Err(Error::invalid("KSP1 channels must share dimensions"));
        }
    }
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    out.write_all(MAGIC)?;
    out.write_all(&(h as u32).to_le_bytes())?;
    out.write_all(&(w as u32).to_le_bytes())?;
    out.write_all(&(channels.len() as u32).to_le_bytes())?;
    for ch in channels {
        for v in ch.iter() {
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read raw complex channels.
pub fn read_ksp1(path: &Path) -> Result<Vec<Array2<Complex64>>> {
    let file = fs::File::open(path)?;
    let mut input = BufReader::new(file);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad(path, "missing KSP1 magic"));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |input: &mut BufReader<fs::File>| -> Result<u32> {
        input.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let h = read_u32(&mut input)? as usize;
    let w = read_u32(&mut input)? as usize;
    let c = read_u32(&mut input)? as usize;
    if h == 0 || w == 0 || c == 0 {
        return Err(bad(path, "zero dimension in header"));
    }
    let mut channels = Vec::with_capacity(c);
    let mut f64buf = [0u8; 8];
    for _ in 0..c {
        let mut data = Vec::with_capacity(h * w);
        for _ in 0..h * w {
            input.read_exact(&mut f64buf)?;
            let re = f64::from_le_bytes(f64buf);
            input.read_exact(&mut f64buf)?;
            let im = f64::from_le_bytes(f64buf);
            data.push(Complex64::new(re, im));
        }
        channels.push(
            Array2::from_shape_vec((h, w), data).map_err(|e| bad(path, e.to_string()))?,
        );
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(bad(path, "trailing bytes after payload"));
    }
    Ok(channels)
}

/// Write a single complex grid (C = 1).
pub fn write_grid(path: &Path, grid: &ComplexGrid) -> Result<()> {
    write_ksp1(path, std::slice::from_ref(grid.data()))
}

/// Read a single complex grid; rejects multi-channel files.
pub fn read_grid(path: &Path) -> Result<ComplexGrid> {
    let channels = read_ksp1(path)?;
    if channels.len() != 1 {
        return Err(bad(path, format!("expected 1 channel, found {}", channels.len())));
    }
    ComplexGrid::new(channels.into_iter().next().unwrap())
}

/// Write a sampling mask as a one-channel KSP1 with binary real parts.
pub fn write_sampling_mask(path: &Path, mask: &SamplingMask) -> Result<()> {
    let data = mask.entries().mapv(|e| Complex64::new(e as f64, 0.0));
    write_ksp1(path, &[data])
}

/// Read a sampling mask stored by [`write_sampling_mask`].
pub fn read_sampling_mask(path: &Path) -> Result<SamplingMask> {
    let channels = read_ksp1(path)?;
    if channels.len() != 1 {
        return Err(bad(path, "mask files hold exactly one channel"));
    }
    let mut entries = Array2::zeros(channels[0].dim());
    for (idx, v) in channels[0].indexed_iter() {
        if v.im != 0.0 || (v.re != 0.0 && v.re != 1.0) {
            return Err(bad(path, "mask entries must be 0 or 1 with zero imaginary part"));
        }
        entries[idx] = v.re as u8;
    }
    SamplingMask::new(entries)
}

/// Write a stacked tensor: one KSP1 channel per real plane (imaginary 0).
pub fn write_stacked(path: &Path, t: &StackedTensor) -> Result<()> {
    let (c, h, w) = t.data().dim();
    let channels: Vec<Array2<Complex64>> = (0..c)
        .map(|i| {
            let plane = t.data().index_axis(ndarray::Axis(0), i);
            Array2::from_shape_fn((h, w), |idx| Complex64::new(plane[idx], 0.0))
        })
        .collect();
    write_ksp1(path, &channels)
}

/// Read a stacked tensor written by [`write_stacked`].
pub fn read_stacked(path: &Path, layout: ChannelLayout) -> Result<StackedTensor> {
    let channels = read_ksp1(path)?;
    let c = channels.len();
    let (h, w) = channels[0].dim();
    let mut data = Array3::zeros((c, h, w));
    for (i, ch) in channels.iter().enumerate() {
        for (idx, v) in ch.indexed_iter() {
            if v.im != 0.0 {
                return Err(bad(path, "stacked tensors store real planes only"));
            }
            data[[i, idx.0, idx.1]] = v.re;
        }
    }
    StackedTensor::new(data, layout)
}

/// Write a binary grid as a P5 portable graymap with maxval 1.
pub fn write_pgm(path: &Path, entries: &Array2<u8>) -> Result<()> {
    let (h, w) = entries.dim();
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{w} {h}\n1\n")?;
    for v in entries.iter() {
        out.write_all(&[*v])?;
    }
    out.flush()?;
    Ok(())
}

/// Write a CSV file from a header and stringified rows.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Per-step loss trace as `step,loss`.
pub fn write_loss_trace(path: &Path, losses: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> = losses
        .iter()
        .enumerate()
        .map(|(i, l)| vec![i.to_string(), format!("{l:.12e}")])
        .collect();
    write_csv(path, "step,loss", &rows)
}
