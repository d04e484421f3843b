//! Run configuration: presets, flat key=value config files, and flag
//! overrides. Every effective value is echoed into the run manifest.

use crate::encoder::ModelDims;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown preset {0:?} (expected mini, paper-scaffold or paper-cliff)")]
    UnknownPreset(String),
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for key {key}: {message}")]
    BadValue {
        key: String,
        value: String,
        message: String,
    },
    #[error("config line {line}: expected key=value")]
    BadLine { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMethod {
    Scaffold,
    Cliff,
}

impl SplitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitMethod::Scaffold => "scaffold",
            SplitMethod::Cliff => "cliff",
        }
    }

    /// Hybrid-loss weight wired to the split method: 6 for scaffold runs,
    /// 3 for cliff runs.
    pub fn default_beta(self) -> f64 {
        match self {
            SplitMethod::Scaffold => 6.0,
            SplitMethod::Cliff => 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: String,
    pub seed: u64,
    pub split_method: SplitMethod,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub clusters: usize,
    pub dims: ModelDims,
    pub lr0: f64,
    /// Learning-rate decay horizon; 0 derives it from epochs * batches.
    pub total_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Explicit hybrid-loss weight; None takes the split-method preset.
    pub beta: Option<f64>,
    pub margin: f64,
    pub mask_rate: f64,
    /// Circular-fingerprint radius and width for cliff mining and splitting;
    /// defaults, not literature values.
    pub fp_radius: usize,
    pub fp_width: usize,
    /// Path to an XYZ-block conformer file; absent ids use the generator.
    pub conformers: Option<String>,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "mini" => Ok(RunConfig {
                preset: name.to_string(),
                seed: 0,
                split_method: SplitMethod::Scaffold,
                train_ratio: 0.8,
                val_ratio: 0.1,
                test_ratio: 0.1,
                clusters: 5,
                dims: ModelDims::mini(),
                lr0: 1e-3,
                total_steps: 0,
                batch_size: 8,
                epochs: 30,
                beta: None,
                margin: 1.0,
                mask_rate: 0.15,
                fp_radius: 2,
                fp_width: 2048,
                conformers: None,
            }),
            "paper-scaffold" | "paper-cliff" => Ok(RunConfig {
                preset: name.to_string(),
                seed: 0,
                split_method: if name == "paper-cliff" {
                    SplitMethod::Cliff
                } else {
                    SplitMethod::Scaffold
                },
                train_ratio: 0.8,
                val_ratio: 0.1,
                test_ratio: 0.1,
                clusters: 5,
                dims: ModelDims::full(),
                lr0: 1e-5,
                total_steps: 0,
                batch_size: 4,
                epochs: 200,
                beta: None,
                margin: 1.0,
                mask_rate: 0.15,
                fp_radius: 2,
                fp_width: 2048,
                conformers: None,
            }),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    pub fn effective_beta(&self) -> f64 {
        self.beta.unwrap_or(self.split_method.default_beta())
    }

    pub fn ratios(&self) -> (f64, f64, f64) {
        (self.train_ratio, self.val_ratio, self.test_ratio)
    }

    /// Apply one key=value override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                message: e.to_string(),
            })
        }

        match key {
            "seed" => self.seed = parse(key, value)?,
            "split_method" => {
                self.split_method = match value {
                    "scaffold" => SplitMethod::Scaffold,
                    "cliff" => SplitMethod::Cliff,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            message: "expected scaffold or cliff".to_string(),
                        })
                    }
                }
            }
            "train_ratio" => self.train_ratio = parse(key, value)?,
            "val_ratio" => self.val_ratio = parse(key, value)?,
            "test_ratio" => self.test_ratio = parse(key, value)?,
            "clusters" => self.clusters = parse(key, value)?,
            "dim" => self.dims.dim = parse(key, value)?,
            "heads" => self.dims.heads = parse(key, value)?,
            "layers_3d" => self.dims.layers_3d = parse(key, value)?,
            "seq_layers" => self.dims.seq_layers = parse(key, value)?,
            "state_dim" => self.dims.state_dim = parse(key, value)?,
            "conv_width" => self.dims.conv_width = parse(key, value)?,
            "vocab_size" => self.dims.vocab_size = parse(key, value)?,
            "rbf_count" => self.dims.rbf_count = parse(key, value)?,
            "compression" => self.dims.compression = parse(key, value)?,
            "regress_hidden" => self.dims.regress_hidden = parse(key, value)?,
            "lr0" => self.lr0 = parse(key, value)?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "beta" => self.beta = Some(parse(key, value)?),
            "margin" => self.margin = parse(key, value)?,
            "mask_rate" => self.mask_rate = parse(key, value)?,
            "fp_radius" => self.fp_radius = parse(key, value)?,
            "fp_width" => self.fp_width = parse(key, value)?,
            "conformers" => self.conformers = Some(value.to_string()),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Apply a flat key=value file ('#' starts a comment).
    pub fn apply_file_str(&mut self, content: &str) -> Result<(), ConfigError> {
        for (idx, raw) in content.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadLine { line: idx + 1 });
            };
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, message: &str| {
            Err(ConfigError::BadValue {
                key: key.to_string(),
                value,
                message: message.to_string(),
            })
        };
        if (self.train_ratio + self.val_ratio + self.test_ratio - 1.0).abs() > 1e-9 {
            return bad(
                "train_ratio",
                format!(
                    "{}+{}+{}",
                    self.train_ratio, self.val_ratio, self.test_ratio
                ),
                "ratios must sum to 1",
            );
        }
        if !self.dims.dim.is_multiple_of(self.dims.heads) {
            return bad(
                "heads",
                self.dims.heads.to_string(),
                "head count must divide dim",
            );
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size", self.batch_size.to_string(), "must be nonzero");
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return bad("mask_rate", self.mask_rate.to_string(), "must be in [0,1]");
        }
        if !self.fp_width.is_power_of_two() {
            return bad("fp_width", self.fp_width.to_string(), "must be a power of two");
        }
        Ok(())
    }
}
