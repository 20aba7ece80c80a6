use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterKind;
use crate::model::{ModelConfig, ModelSpec};

/// Experiment description read from a TOML file.
///
/// ```toml
/// steps = 5
/// seed = 7
/// kinds = ["true", "enkf_mf", "gpf_bg", "gpf_gt", "enkf_1000"]
/// resolution = 1024          # state points per axis (optional)
/// deltas = [0.0, 0.1, 0.2]   # sweep only
/// out = "out"                # optional, --out wins
/// write_densities = false
/// model_file = "model.toml"  # or an inline [model] table
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub write_densities: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
}

fn default_steps() -> usize {
    5
}

fn default_kinds() -> Vec<String> {
    ["true", "enkf_mf", "gpf_bg", "gpf_gt"].map(String::from).to_vec()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            seed: 0,
            kinds: default_kinds(),
            resolution: None,
            deltas: Vec::new(),
            out: None,
            write_densities: false,
            model_file: None,
            model: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read a config; a relative `model_file` is resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(mf) = &cfg.model_file {
            if mf.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                cfg.model_file = Some(base.join(mf));
            }
        }
        Ok(cfg)
    }

    /// The model of a `run`: inline table, model file, or the default
    /// bounded scalar model.
    pub fn resolve_model(&self) -> Result<ModelSpec> {
        match (&self.model, &self.model_file) {
            (Some(_), Some(_)) => Err(Error::Config("give either [model] or model_file, not both".into())),
            (Some(m), None) => ModelSpec::from_config(m.clone()),
            (None, Some(path)) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                ModelSpec::from_toml(&text)
            }
            (None, None) => Ok(ModelSpec::default_bounded()),
        }
    }

    pub fn filter_kinds(&self) -> Result<Vec<FilterKind>> {
        if self.kinds.is_empty() {
            return Err(Error::Config("no filter kinds requested".into()));
        }
        let kinds = self
            .kinds
            .iter()
            .map(|k| k.parse())
            .collect::<Result<Vec<FilterKind>>>()?;
        let mut unique = kinds.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != kinds.len() {
            return Err(Error::Config("filter kinds listed twice".into()));
        }
        Ok(kinds)
    }
}
