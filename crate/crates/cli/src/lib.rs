//! Command implementations behind the `mdcn` binary. Each command is a plain
//! function returning `mdcn::Result` so tests can drive it without a process.

pub mod ablation;
pub mod commands;
pub mod eval;

use std::fs;
use std::path::Path;

use mdcn::model::{json_config_error, ModelConfig};
use mdcn::optim::TrainConfig;
use mdcn::{Error, Result};
use serde::{Deserialize, Serialize};

/// Process exit status for each error class.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        Error::Data(_)
        | Error::Format { .. }
        | Error::BadMagic { .. }
        | Error::VersionMismatch { .. }
        | Error::Truncated { .. }
        | Error::Io { .. } => 3,
        Error::NonFinite { .. } => 4,
        Error::UnsupportedFactor { .. } => 5,
        Error::Contract { .. } => 1,
    }
}

/// Contents of a training configuration file.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(json_config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if let Some(f) = self.train.factors.iter().find(|f| !self.model.supports(**f)) {
            return Err(Error::config(
                "factors",
                format!("training factor x{f} has no upsampling head in the model"),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }
}

pub(crate) fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
