//! Key-value text configuration.
//!
//! One `dotted.key = value` per line, `#` starts a comment. Keys name fields
//! of [`AppConfig`]; values are JSON literals (`3.5`, `true`, `[0.9, 0.6]`,
//! `null`) or bare words for enum variants. Unset keys keep their defaults.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::device::DeviceSpec;
use crate::error::{Error, Result};
use crate::photon::{Interferometer, SourceParams};
use crate::rig::RigConfig;

/// Environment variable holding the default config path.
pub const CONFIG_ENV: &str = "PIGTAIL_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonRunConfig {
    pub pulses: u64,
    /// Excitation power in saturation units; `null` selects the operating point.
    pub power: Option<f64>,
    pub window_ps: u64,
    pub bin_width_ps: u64,
}

impl Default for PhotonRunConfig {
    fn default() -> Self {
        PhotonRunConfig { pulses: 10_000_000, power: None, window_ps: 200_000, bin_width_ps: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRunConfig {
    pub hours: f64,
    pub samples: usize,
    pub rate_relative_std: f64,
    pub indistinguishability_relative_std: f64,
    /// Lag-one correlation of the fluctuations.
    pub correlation: f64,
}

impl Default for StabilityRunConfig {
    fn default() -> Self {
        StabilityRunConfig {
            hours: 10.0,
            samples: 3600,
            rate_relative_std: 0.0282,
            indistinguishability_relative_std: 0.0069,
            correlation: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AppConfig {
    pub device: DeviceSpec,
    pub rig: RigConfig,
    pub source: SourceParams,
    pub interferometer: Interferometer,
    pub photon_run: PhotonRunConfig,
    pub stability_run: StabilityRunConfig,
}

fn config_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

impl AppConfig {
    pub fn parse<R: BufRead>(r: R) -> Result<Self> {
        let mut tree = serde_json::to_value(AppConfig::default()).expect("config serializes");
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, raw) = body.split_once('=').ok_or_else(|| config_err(i + 1, "expected `key = value`"))?;
            let (key, raw) = (key.trim(), raw.trim());
            let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut node = &mut tree;
            for part in key.split('.') {
                node = node
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| config_err(i + 1, format!("unknown key `{key}`")))?;
            }
            if node.is_object() {
                return Err(config_err(i + 1, format!("`{key}` is a section, not a value")));
            }
            *node = value;
        }
        let cfg: AppConfig = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.rig.validate()?;
        self.source.validate()?;
        self.interferometer.validate()?;
        if self.photon_run.pulses == 0 || self.photon_run.bin_width_ps == 0 {
            return Err(Error::Config("photon_run needs pulses and a positive bin width".into()));
        }
        if self.stability_run.samples < 10 || !(self.stability_run.hours > 0.0) {
            return Err(Error::Config("stability_run needs ≥ 10 samples over a positive duration".into()));
        }
        Ok(())
    }

    /// Explicit path, else the path in [`CONFIG_ENV`], else defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let path: Option<PathBuf> = path.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        match path {
            Some(p) => {
                let f = std::fs::File::open(&p)?;
                Self::parse(std::io::BufReader::new(f))
            }
            None => Ok(AppConfig::default()),
        }
    }

    /// Every leaf key with its value, in the format [`AppConfig::parse`] reads.
    pub fn to_text(&self) -> String {
        fn walk(prefix: &str, v: &Value, out: &mut String) {
            match v {
                Value::Object(map) => {
                    for (k, v) in map {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&key, v, out);
                    }
                }
                leaf => out.push_str(&format!("{prefix} = {leaf}\n")),
            }
        }
        let mut out = String::new();
        walk("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }
}
