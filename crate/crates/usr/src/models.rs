//! Persisted regression models.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use usr_core::regression::{RegressionModel, SubMetricMapping};

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// Specific-quality ratings to overall rating, on mean ratings.
    #[default]
    Human,
    /// One human-rating regression per annotator.
    PerAnnotator,
    /// Mapped sub-metric scores to mean overall rating.
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub model: RegressionModel,
    /// Softmax over the weights.
    pub profile: [f64; 5],
    pub mode: FitMode,
    pub mapping: SubMetricMapping,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    pub rows: usize,
    /// Spearman of predicted against observed overall on the fitting rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_spearman: Option<f64>,
    pub dataset_fingerprint: String,
    pub config_hash: String,
    pub seed: u64,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(self).expect("models serialize") + "\n";
        fs::write(path, text).map_err(|e| EvalError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| EvalError::parse(path, e.line(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use usr_core::regression::Normalizer;

    #[test]
    fn round_trips_as_flat_json() {
        let model = RegressionModel {
            weights: [1.0, 0.0, 0.0, 0.0, 0.5],
            intercept: 3.0,
            normalizer: Normalizer {
                mean: [1.0; 5],
                std: [2.0; 5],
            },
        };
        let file = ModelFile {
            model,
            profile: model.weight_profile(),
            mode: FitMode::Human,
            mapping: SubMetricMapping::default(),
            annotator: None,
            rows: 10,
            fit_spearman: Some(0.9),
            dataset_fingerprint: "d".into(),
            config_hash: "c".into(),
            seed: 4,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m/model.json");
        file.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["intercept"], 3.0);
        assert_eq!(v["mode"], "human");
        assert_eq!(ModelFile::load(&path).unwrap(), file);
    }
}
