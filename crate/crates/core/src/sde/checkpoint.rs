//! SCM1 checkpoint format: magic bytes `"SCM1"`, little-endian `u32` tensor
//! count, a shape header per tensor (`u32` rank then `u32` dims), followed
//! by every tensor's values as little-endian `f64`, in declaration order.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::ArrayD;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SCM1";

pub fn save_scm1(path: &Path, tensors: &[ArrayD<f64>]) -> Result<()> {
    if tensors.is_empty() {
        return Err(Error::invalid("checkpoint requires at least one tensor"));
    }
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    out.write_all(MAGIC)?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.write_all(&(t.ndim() as u32).to_le_bytes())?;
        for d in t.shape() {
            out.write_all(&(*d as u32).to_le_bytes())?;
        }
    }
    for t in tensors {
        for v in t.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_scm1(path: &Path) -> Result<Vec<ArrayD<f64>>> {
    let bad = |reason: &str| Error::BadFormat {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    let file = fs::File::open(path)?;
    let mut input = BufReader::new(file);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("missing SCM1 magic"));
    }
    let mut u32buf = [0u8; 4];
    input.read_exact(&mut u32buf)?;
    let count = u32::from_le_bytes(u32buf) as usize;
    if count == 0 || count > 1024 {
        return Err(bad("implausible tensor count"));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut u32buf)?;
        let ndim = u32::from_le_bytes(u32buf) as usize;
        if ndim == 0 || ndim > 8 {
            return Err(bad("implausible tensor rank"));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            input.read_exact(&mut u32buf)?;
            shape.push(u32::from_le_bytes(u32buf) as usize);
        }
        shapes.push(shape);
    }
    let mut tensors = Vec::with_capacity(count);
    let mut f64buf = [0u8; 8];
    for shape in shapes {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            input.read_exact(&mut f64buf)?;
            let v = f64::from_le_bytes(f64buf);
            if !v.is_finite() {
                return Err(bad("non-finite parameter value"));
            }
            data.push(v);
        }
        tensors.push(
            ArrayD::from_shape_vec(ndarray::IxDyn(&shape), data)
                .map_err(|e| bad(&e.to_string()))?,
        );
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(tensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{NoiseSchedule, ScoreModel, TinyDenoiser};
    use crate::test_util::random_planes;
    use tempfile::tempdir;

    #[test]
    fn checkpoint_roundtrip_preserves_model() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.scm1");
        let sched = NoiseSchedule::new(0.01, 378.0, 1000).unwrap();
        let net = TinyDenoiser::new(6, 8, sched, 21).unwrap();
        save_scm1(&path, &net.parameters()).unwrap();
        let params = load_scm1(&path).unwrap();
        let rebuilt = TinyDenoiser::from_parameters(&params, sched).unwrap();
        let x = random_planes(6, 8, 8, 3);
        assert_eq!(
            net.evaluate(&x, 0.2).unwrap(),
            rebuilt.evaluate(&x, 0.2).unwrap()
        );
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("junk.scm1");
        fs::write(&path, b"JUNK\x01\x00\x00\x00").unwrap();
        assert!(load_scm1(&path).is_err());
    }
}
