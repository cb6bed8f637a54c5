//! TOML run configuration for the `analyze` command.
//!
//! ```toml
//! input = "house1.csv"   # required, relative to this file
//! seed = 7               # required
//!
//! [cutoff]
//! window_events = 50     # required
//! ```
//!
//! Every other field has a default; see the README for the full list.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffConfig;
use crate::error::{Error, Result};
use crate::ingest::IngestConfig;
use crate::surprise::TraceFormat;

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<TraceFormat> {
    vec![TraceFormat::Csv]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Formats of the standalone trace export; the first one is referenced from the result.
    #[serde(default = "default_formats")]
    pub trace_formats: Vec<TraceFormat>,
    /// Report divergences in bits instead of nats in report.txt.
    #[serde(default)]
    pub report_bits: bool,
    #[serde(default)]
    pub ingest: IngestConfig,
    pub cutoff: CutoffConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            return Err(Error::config("input", "must name a file"));
        }
        if self.trace_formats.is_empty() {
            return Err(Error::config("trace_formats", "list at least one format"));
        }
        self.ingest.validate()?;
        self.cutoff.validate()
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = missing_field(&msg).unwrap_or_else(|| origin.display().to_string());
            Error::config(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative `input` and `output_dir` resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io_util::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text, path)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        if cfg.input.is_relative() {
            cfg.input = dir.join(&cfg.input);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = dir.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

fn missing_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("missing field `")?;
    Some(rest.split('`').next()?.to_string())
}
