//! Run manifests: every resolved setting, seed, path, and stage timing of an
//! artifact-producing command, written atomically next to the outputs so a
//! run can be reproduced bit for bit.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

pub struct RunManifest {
    entries: Vec<(String, String)>,
    timings: Vec<(String, f64)>,
    started: Instant,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut m = RunManifest {
            entries: Vec::new(),
            timings: Vec::new(),
            started: Instant::now(),
        };
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn set_path(&mut self, key: &str, path: &Path) {
        self.set(key, path.display());
    }

    /// Record the wall-clock duration of one stage.
    pub fn time_stage<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f()?;
        self.timings
            .push((stage.to_string(), t0.elapsed().as_secs_f64()));
        Ok(out)
    }

    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        let total = self.started.elapsed().as_secs_f64();
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(&format!("{k} = {v}\n"));
        }
        for (stage, secs) in &self.timings {
            text.push_str(&format!("timing.{stage}_s = {secs:.3}\n"));
        }
        text.push_str(&format!("timing.total_s = {total:.3}\n"));
        self.entries.clear();
        let path = dir.join("manifest.txt");
        atomic_write(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Write via a temp file plus rename so concurrent runs never interleave.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// The output directory: the --out flag unless the environment override
/// `MASKDIFF_OUT` is set.
pub fn resolve_out_dir(flag: &Path) -> PathBuf {
    match std::env::var_os("MASKDIFF_OUT") {
        Some(base) => PathBuf::from(base),
        None => flag.to_path_buf(),
    }
}
