//! Run configuration: built-in defaults, overlaid by an optional TOML file,
//! overlaid by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use usr_core::mlm::MlmOrientation;
use usr_core::stats::{HumanAggregation, PValueMethod};

use crate::dataset::DatasetFormat;
use crate::error::{EvalError, Result};
use crate::report::ReportFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NormStatsMode {
    /// z-score sub-metric scores over the batch being scored.
    #[default]
    Batch,
    /// Reuse the statistics stored with the model.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// Dialogs taken from an annotated dataset.
    #[default]
    Dataset,
    /// Raw Topical-Chat conversations (JSON object keyed by conversation id).
    TopicalChat,
    /// ConvAI2 / PersonaChat numbered text dialogs.
    Convai2,
}

/// Which backend serves each model-based metric: a registry id or a
/// checkpoint directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSpec {
    pub mlm: Option<String>,
    #[serde(rename = "dr-c")]
    pub dr_context: Option<String>,
    #[serde(rename = "dr-f")]
    pub dr_fact: Option<String>,
    /// Word-vector file, or `toy-hash`.
    pub embeddings: Option<String>,
    /// Contextual encoder for BERTScore; `toy-mix` is the only built-in.
    pub encoder: Option<String>,
}

impl BackendSpec {
    /// Applies `key=value[,key=value...]`.
    pub fn apply(&mut self, spec: &str) -> Result<()> {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                EvalError::Config(format!("backend `{part}` is not of the form key=value"))
            })?;
            let slot = match key.trim() {
                "mlm" => &mut self.mlm,
                "dr-c" | "dr-context" => &mut self.dr_context,
                "dr-f" | "dr-fact" => &mut self.dr_fact,
                "embeddings" => &mut self.embeddings,
                "encoder" => &mut self.encoder,
                other => {
                    return Err(EvalError::Config(format!(
                        "unknown backend slot `{other}` (expected mlm, dr-c, dr-f, embeddings or encoder)"
                    )))
                }
            };
            *slot = Some(value.trim().to_string());
        }
        Ok(())
    }
}

pub const DEFAULT_METRICS: [&str; 7] = [
    "f1", "bleu-1", "bleu-2", "bleu-3", "bleu-4", "meteor", "rouge-l",
];
pub const DEFAULT_DR_EPOCHS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub format: DatasetFormat,
    /// Separate annotation records, when not stored with the examples.
    pub annotations: Option<PathBuf>,
    pub metrics: Vec<String>,
    pub backend: BackendSpec,
    pub mapping: String,
    pub seed: u64,
    pub out: PathBuf,
    pub norm_stats: NormStatsMode,
    pub mlm_orientation: MlmOrientation,
    pub mlm_normalize: bool,
    pub include_ground_truth: bool,
    pub aggregation: HumanAggregation,
    /// p-values of system-level cells.
    pub system_p_value: PValueMethod,
    pub report_format: ReportFormat,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub model: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub epochs: Option<u32>,
    pub negative_ratio: usize,
    pub corpus: Option<PathBuf>,
    pub corpus_format: CorpusFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            format: DatasetFormat::default(),
            annotations: None,
            metrics: DEFAULT_METRICS.iter().map(|m| m.to_string()).collect(),
            backend: BackendSpec::default(),
            mapping: "topical-chat".into(),
            seed: 0,
            out: PathBuf::from("usr-out"),
            norm_stats: NormStatsMode::default(),
            mlm_orientation: MlmOrientation::default(),
            mlm_normalize: false,
            include_ground_truth: false,
            aggregation: HumanAggregation::default(),
            system_p_value: PValueMethod::default(),
            report_format: ReportFormat::default(),
            workers: 0,
            model: None,
            scores: None,
            epochs: None,
            negative_ratio: usr_core::retrieval::DEFAULT_NEGATIVE_RATIO,
            corpus: None,
            corpus_format: CorpusFormat::default(),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Layers `file` (TOML) and then `flags` over the defaults. `flags` holds
    /// only the options given on the command line.
    pub fn resolve(file: Option<&Path>, flags: Value) -> Result<Self> {
        let mut value = serde_json::to_value(Self::default()).expect("defaults serialize");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
            let table: Value = toml::from_str(&text)
                .map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut value, table);
        }
        merge(&mut value, flags);
        serde_json::from_value(value).map_err(|e| EvalError::Config(e.to_string()))
    }

    /// Short hash of every setting that can change results; the output
    /// directory and worker count are left out.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("out");
            m.remove("workers");
        }
        crate::fingerprint::of_json(&v)[..16].to_string()
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| EvalError::Config("no dataset given (use --dataset)".into()))
    }

    pub fn mlm_epochs(&self) -> u32 {
        self.epochs.unwrap_or(usr_core::mlm::DEFAULT_MLM_EPOCHS)
    }

    pub fn dr_epochs(&self) -> u32 {
        self.epochs.unwrap_or(DEFAULT_DR_EPOCHS)
    }
}
