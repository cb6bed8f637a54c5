//! Versioned JSON checkpoints of a [`DpgmmModel`].
//!
//! Floats are written with shortest round-trip formatting, so loading a saved
//! model reproduces it bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DpgmmModel, NiwParams, StickBeta, SuffStats};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    /// Caller-supplied JSON, e.g. the config that produced the model.
    #[serde(default)]
    metadata: serde_json::Value,
    alpha: f64,
    covariance_floor: f64,
    seed: u64,
    n_observed: usize,
    base: NiwParams,
    sticks: Vec<StickBeta>,
    components: Vec<NiwParams>,
    stats: Vec<SuffStats>,
}

impl DpgmmModel {
    pub fn to_json(&self, metadata: serde_json::Value) -> Result<String> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            metadata,
            alpha: self.alpha,
            covariance_floor: self.covariance_floor,
            seed: self.seed,
            n_observed: self.n_observed,
            base: self.base.clone(),
            sticks: self.sticks.clone(),
            components: self.components.clone(),
            stats: self.stats.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Numeric(format!("serializing model: {e}")))
    }

    /// Parse a checkpoint; `origin` is only used in error messages.
    pub fn from_json(text: &str, origin: &Path) -> Result<(DpgmmModel, serde_json::Value)> {
        let bad = |reason: String| Error::Artifact {
            path: origin.to_path_buf(),
            reason,
        };
        let file: ModelFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let k = file.components.len();
        if k < 2 || file.sticks.len() + 1 != k || file.stats.len() != k {
            return Err(bad(format!(
                "inconsistent sizes: {} components, {} sticks, {} stats",
                k,
                file.sticks.len(),
                file.stats.len()
            )));
        }
        file.base.validate().map_err(|e| bad(e.to_string()))?;
        let d = file.base.dim();
        for c in &file.components {
            c.validate().map_err(|e| bad(format!("component: {e}")))?;
            if c.dim() != d {
                return Err(bad("component dimension differs from base".into()));
            }
        }
        for s in &file.stats {
            if s.mean.len() != d || s.scatter.nrows() != d || s.scatter.ncols() != d {
                return Err(bad("statistics dimension differs from base".into()));
            }
        }
        if file
            .sticks
            .iter()
            .any(|s| !(s.a > 0.0 && s.b > 0.0 && s.a.is_finite() && s.b.is_finite()))
        {
            return Err(bad("stick parameters must be positive".into()));
        }
        if !(file.alpha > 0.0) {
            return Err(bad("alpha must be positive".into()));
        }
        Ok((
            DpgmmModel {
                alpha: file.alpha,
                base: file.base,
                covariance_floor: file.covariance_floor,
                sticks: file.sticks,
                components: file.components,
                stats: file.stats,
                n_observed: file.n_observed,
                seed: file.seed,
            },
            file.metadata,
        ))
    }

    pub fn save(&self, path: &Path, metadata: serde_json::Value) -> Result<()> {
        crate::io_util::write_atomic(path, self.to_json(metadata)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<(DpgmmModel, serde_json::Value)> {
        let text = crate::io_util::read_to_string(path)?;
        Self::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockfilter::Event;
    use crate::dpgmm::{init_model, FitOptions};

    fn fitted() -> DpgmmModel {
        let events: Vec<Event> = (0..90)
            .map(|i| Event::from_feature(i as f64, vec![[100.0, -700.0, 1500.0][i % 3] + (i as f64).sin() * 7.3]))
            .collect();
        let base = NiwParams::isotropic(vec![0.0], 2500.0, 0.01, 3.0).unwrap();
        init_model(30, 1.0, base, 5)
            .unwrap()
            .fit_update(&events, &FitOptions::default())
            .unwrap()
            .0
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = fitted();
        let meta = serde_json::json!({"note": "x"});
        let text = m.to_json(meta.clone()).unwrap();
        let (back, meta_back) = DpgmmModel::from_json(&text, Path::new("m.json")).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta_back, meta);
        for (a, b) in m.sticks().iter().zip(back.sticks()) {
            assert_eq!(a.a.to_bits(), b.a.to_bits());
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = fitted();
        m.save(&path, serde_json::Value::Null).unwrap();
        let (back, _) = DpgmmModel::load(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_corrupt_checkpoints() {
        let m = fitted();
        let text = m.to_json(serde_json::Value::Null).unwrap();
        let p = Path::new("m.json");
        assert!(matches!(
            DpgmmModel::from_json(&text[..text.len() / 2], p),
            Err(Error::Artifact { .. })
        ));
        let wrong = text.replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(DpgmmModel::from_json(&wrong, p).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["sticks"].as_array_mut().unwrap().pop();
        assert!(DpgmmModel::from_json(&v.to_string(), p).is_err());
    }
}
