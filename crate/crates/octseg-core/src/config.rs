//! Run configuration: one section per pipeline stage, loadable from TOML.
//!
//! Every field has a default, so an empty file (or no file at all) yields the
//! stock pipeline. Unknown keys are rejected rather than ignored, which turns
//! typos into load errors instead of silently misconfigured runs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::layers::{LayersConfig, Phase2Config};
use crate::metrics::MetricsConfig;
use crate::preprocess::PreprocessConfig;

/// Environment variable consulted for a config path when the caller gives
/// none.
pub const CONFIG_ENV_VAR: &str = "OCTSEG_CONFIG";

/// Output tables a segmentation run writes next to its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Output selection for segmentation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Write a PNG with the traced boundaries drawn over the scan.
    pub overlay: bool,
    /// Table formats to emit; at least one must stay selected.
    pub formats: Vec<OutputFormat>,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            overlay: false,
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

impl IoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.formats.is_empty() {
            return Err(Error::Config(
                "io.formats must select at least one output format".into(),
            ));
        }
        Ok(())
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }
}

/// Complete parameter set for a segmentation run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preprocess: PreprocessConfig,
    pub graph: GraphConfig,
    pub layers: LayersConfig,
    pub phase2: Phase2Config,
    pub metrics: MetricsConfig,
    pub io: IoConfig,
}

impl RunConfig {
    /// Checks every section; the first offending field is reported.
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.graph.validate()?;
        self.layers.validate()?;
        self.phase2.validate()?;
        self.metrics.validate()?;
        self.io.validate()?;
        Ok(())
    }

    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and validates a TOML file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Resolves the effective config: an explicit path wins, otherwise the
    /// file named by `OCTSEG_CONFIG` is used, otherwise the defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        if let Some(path) = explicit {
            return Self::load(path);
        }
        match std::env::var_os(CONFIG_ENV_VAR) {
            Some(path) => Self::load(Path::new(&path)),
            None => Ok(Self::default()),
        }
    }
}
