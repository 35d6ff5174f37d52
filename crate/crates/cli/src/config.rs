//! Flat `key = value` configuration files. Flags always win over config
//! values; config values win over built-in defaults.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

#[derive(Debug, Default, Clone)]
pub struct Settings {
    map: HashMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("stage config: reading {}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    bail!(
                        "stage config: {}:{} is not a key = value line",
                        path.display(),
                        lineno + 1
                    );
                };
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Settings { map })
    }

    /// Resolve one setting: explicit flag, then config key, then default.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(raw) = self.map.get(key) {
            return raw
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("stage config: key {key} = {raw}: {e}"));
        }
        Ok(default)
    }

    /// Resolve an optional setting with no default.
    pub fn resolve_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.map.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("stage config: key {key} = {raw}: {e}")),
            None => Ok(None),
        }
    }
}

/// Named deterministic sub-streams derived from the single --seed flag, so
/// each stage (data, noise, sampler, …) can be reproduced independently.
pub fn substream(seed: u64, name: &str) -> u64 {
    // FNV-1a over the stream name, mixed with the user seed
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^= seed.wrapping_mul(0x9e3779b97f4a7c15);
    h
}
