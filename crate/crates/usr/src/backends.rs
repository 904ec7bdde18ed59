//! Backend registry and on-disk checkpoints.
//!
//! Backends are looked up by string id. The built-in toy backends are
//! `toy-uniform` and `toy-counting` (masked LM) and `toy-constant` and
//! `toy-bow-logistic` (retrieval); further adapters can be registered at
//! runtime. A checkpoint is a directory holding `manifest.json` and the
//! backend's serialized `state.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use usr_core::corpus::{DialogCorpus, RetrievalVariant};
use usr_core::mlm::{CountingLm, MaskedLmBackend, UniformLm};
use usr_core::retrieval::{BowLogistic, ConstantRetrieval, RetrievalBackend};

use crate::error::{EvalError, Result};

/// A masked LM the tool can create, score with from many threads, and save.
pub trait MlmAdapter: MaskedLmBackend + Send + Sync {
    fn state(&self) -> Result<Value>;
}

pub trait RetrievalAdapter: RetrievalBackend + Send + Sync {
    fn state(&self) -> Result<Value>;
}

fn to_state<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| EvalError::Backend(e.to_string()))
}

fn from_state<T: serde::de::DeserializeOwned>(id: &str, v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| EvalError::Backend(format!("corrupt `{id}` state: {e}")))
}

impl MlmAdapter for UniformLm {
    fn state(&self) -> Result<Value> {
        to_state(self)
    }
}

impl MlmAdapter for CountingLm {
    fn state(&self) -> Result<Value> {
        to_state(self)
    }
}

impl RetrievalAdapter for ConstantRetrieval {
    fn state(&self) -> Result<Value> {
        to_state(self)
    }
}

impl RetrievalAdapter for BowLogistic {
    fn state(&self) -> Result<Value> {
        to_state(self)
    }
}

/// Knobs a factory may use when building a fresh backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildParams {
    pub seed: u64,
    /// Passes over the training data, for backends that train iteratively.
    pub epochs: u32,
}

type Create<T> = Box<dyn Fn(&DialogCorpus, BuildParams) -> Result<Box<T>> + Send + Sync>;
type Restore<T> = Box<dyn Fn(Value) -> Result<Box<T>> + Send + Sync>;

pub struct Entry<T: ?Sized> {
    pub create: Create<T>,
    pub restore: Restore<T>,
}

pub struct BackendRegistry {
    mlm: BTreeMap<String, Entry<dyn MlmAdapter>>,
    retrieval: BTreeMap<String, Entry<dyn RetrievalAdapter>>,
}

fn vocab_size(corpus: &DialogCorpus) -> usize {
    let mut words: Vec<&str> = corpus
        .dialog_turns()
        .flat_map(|t| t.iter().map(String::as_str))
        .collect();
    words.sort_unstable();
    words.dedup();
    // one slot for unseen words
    words.len() + 1
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = Self {
            mlm: BTreeMap::new(),
            retrieval: BTreeMap::new(),
        };
        r.register_mlm(
            UniformLm::ID,
            Entry {
                create: Box::new(|c, _| Ok(Box::new(UniformLm::new(vocab_size(c).max(2))?))),
                restore: Box::new(|v| Ok(Box::new(from_state::<UniformLm>(UniformLm::ID, v)?))),
            },
        );
        r.register_mlm(
            CountingLm::ID,
            Entry {
                create: Box::new(|c, _| {
                    Ok(Box::new(CountingLm::with_vocab_from(c.dialog_turns())))
                }),
                restore: Box::new(|v| Ok(Box::new(from_state::<CountingLm>(CountingLm::ID, v)?))),
            },
        );
        r.register_retrieval(
            ConstantRetrieval::ID,
            Entry {
                create: Box::new(|_, _| Ok(Box::new(ConstantRetrieval { probability: 0.5 }))),
                restore: Box::new(|v| {
                    Ok(Box::new(from_state::<ConstantRetrieval>(
                        ConstantRetrieval::ID,
                        v,
                    )?))
                }),
            },
        );
        r.register_retrieval(
            BowLogistic::ID,
            Entry {
                create: Box::new(|_, p| {
                    let mut b = BowLogistic::new(p.seed);
                    b.epochs = p.epochs;
                    Ok(Box::new(b))
                }),
                restore: Box::new(|v| Ok(Box::new(from_state::<BowLogistic>(BowLogistic::ID, v)?))),
            },
        );
        r
    }
}

impl BackendRegistry {
    pub fn register_mlm(&mut self, id: &str, entry: Entry<dyn MlmAdapter>) {
        self.mlm.insert(id.to_string(), entry);
    }

    pub fn register_retrieval(&mut self, id: &str, entry: Entry<dyn RetrievalAdapter>) {
        self.retrieval.insert(id.to_string(), entry);
    }

    pub fn mlm_ids(&self) -> Vec<&str> {
        self.mlm.keys().map(String::as_str).collect()
    }

    pub fn retrieval_ids(&self) -> Vec<&str> {
        self.retrieval.keys().map(String::as_str).collect()
    }

    fn unknown(kind: &str, id: &str, known: Vec<&str>) -> EvalError {
        EvalError::Config(format!(
            "unknown {kind} backend `{id}` (known: {})",
            known.join(", ")
        ))
    }

    pub fn create_mlm(
        &self,
        id: &str,
        corpus: &DialogCorpus,
        p: BuildParams,
    ) -> Result<Box<dyn MlmAdapter>> {
        let e = self
            .mlm
            .get(id)
            .ok_or_else(|| Self::unknown("masked-LM", id, self.mlm_ids()))?;
        (e.create)(corpus, p)
    }

    pub fn create_retrieval(
        &self,
        id: &str,
        corpus: &DialogCorpus,
        p: BuildParams,
    ) -> Result<Box<dyn RetrievalAdapter>> {
        let e = self
            .retrieval
            .get(id)
            .ok_or_else(|| Self::unknown("retrieval", id, self.retrieval_ids()))?;
        (e.create)(corpus, p)
    }

    /// Loads a masked-LM checkpoint written by [`save_checkpoint`].
    pub fn load_mlm(&self, dir: &Path) -> Result<(Manifest, Box<dyn MlmAdapter>)> {
        let (manifest, state) = read_checkpoint(dir)?;
        if manifest.target != TrainTarget::Mlm {
            return Err(EvalError::Config(format!(
                "{} is a {} checkpoint, not mlm",
                dir.display(),
                manifest.target.key()
            )));
        }
        let e = self
            .mlm
            .get(&manifest.backend_id)
            .ok_or_else(|| Self::unknown("masked-LM", &manifest.backend_id, self.mlm_ids()))?;
        Ok(((manifest), (e.restore)(state)?))
    }

    pub fn load_retrieval(
        &self,
        dir: &Path,
        variant: RetrievalVariant,
    ) -> Result<(Manifest, Box<dyn RetrievalAdapter>)> {
        let (manifest, state) = read_checkpoint(dir)?;
        let want = TrainTarget::from_variant(variant);
        if manifest.target != want {
            return Err(EvalError::Config(format!(
                "{} is a {} checkpoint, expected {}",
                dir.display(),
                manifest.target.key(),
                want.key()
            )));
        }
        let e = self.retrieval.get(&manifest.backend_id).ok_or_else(|| {
            Self::unknown("retrieval", &manifest.backend_id, self.retrieval_ids())
        })?;
        Ok((manifest, (e.restore)(state)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TrainTarget {
    Mlm,
    DrContext,
    DrFact,
}

impl TrainTarget {
    pub fn key(self) -> &'static str {
        match self {
            TrainTarget::Mlm => "mlm",
            TrainTarget::DrContext => "dr-context",
            TrainTarget::DrFact => "dr-fact",
        }
    }

    pub fn variant(self) -> Option<RetrievalVariant> {
        match self {
            TrainTarget::Mlm => None,
            TrainTarget::DrContext => Some(RetrievalVariant::Context),
            TrainTarget::DrFact => Some(RetrievalVariant::Fact),
        }
    }

    pub fn from_variant(v: RetrievalVariant) -> Self {
        match v {
            RetrievalVariant::Context => TrainTarget::DrContext,
            RetrievalVariant::Fact => TrainTarget::DrFact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub backend_id: String,
    pub target: TrainTarget,
    pub corpus_fingerprint: String,
    pub epochs: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_ratio: Option<usize>,
    pub config_hash: String,
    pub tokenizer: String,
    /// Seconds since the Unix epoch at save time.
    pub created_unix: u64,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STATE_FILE: &str = "state.json";

pub fn save_checkpoint(dir: &Path, manifest: &Manifest, state: &Value) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    let write = |name: &str, v: String| {
        let p = dir.join(name);
        fs::write(&p, v + "\n").map_err(|e| EvalError::io(p, e))
    };
    write(
        MANIFEST_FILE,
        serde_json::to_string_pretty(manifest).expect("manifest serializes"),
    )?;
    write(
        STATE_FILE,
        serde_json::to_string(state).expect("state serializes"),
    )
}

pub fn read_checkpoint(dir: &Path) -> Result<(Manifest, Value)> {
    let read = |name: &str| -> Result<String> {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| EvalError::io(p, e))
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_str(&read(MANIFEST_FILE)?)
        .map_err(|e| EvalError::parse(&manifest_path, e.line(), e))?;
    let state_path = dir.join(STATE_FILE);
    let state: Value = serde_json::from_str(&read(STATE_FILE)?)
        .map_err(|e| EvalError::parse(&state_path, e.line(), e))?;
    Ok((manifest, state))
}

pub fn is_checkpoint(path: &Path) -> bool {
    path.join(MANIFEST_FILE).is_file()
}

#[cfg(test)]
mod tests {
    use super::*;
    use usr_core::corpus::{Dialog, Fact};
    use usr_core::TokenSequence;

    fn corpus() -> DialogCorpus {
        DialogCorpus::new(vec![Dialog {
            dialog_id: "d".into(),
            turns: vec![TokenSequence::from("a b"), TokenSequence::from("b c")],
            fact: Fact::default(),
        }])
    }

    #[test]
    fn builtins_create_and_round_trip() {
        let reg = BackendRegistry::default();
        let p = BuildParams { seed: 1, epochs: 1 };
        let u = reg.create_mlm("toy-uniform", &corpus(), p).unwrap();
        assert_eq!(u.id(), "toy-uniform");
        let dir = tempfile::tempdir().unwrap();
        let manifest = Manifest {
            backend_id: u.id().into(),
            target: TrainTarget::Mlm,
            corpus_fingerprint: crate::fingerprint::corpus(&corpus()),
            epochs: 1,
            seed: 1,
            negative_ratio: None,
            config_hash: "x".into(),
            tokenizer: usr_core::tokens::TOKENIZER_VERSION.into(),
            created_unix: 0,
        };
        save_checkpoint(dir.path(), &manifest, &u.state().unwrap()).unwrap();
        let (m, back) = reg.load_mlm(dir.path()).unwrap();
        assert_eq!(m, manifest);
        let masked: Vec<String> = vec!["<mask>".into()];
        assert_eq!(
            back.masked_log_likelihood(&masked, 0, "a").unwrap(),
            u.masked_log_likelihood(&masked, 0, "a").unwrap()
        );
        assert!(matches!(
            reg.load_retrieval(dir.path(), RetrievalVariant::Context),
            Err(EvalError::Config(_))
        ));
    }

    #[test]
    fn unknown_ids_are_configuration_errors() {
        let reg = BackendRegistry::default();
        let p = BuildParams { seed: 0, epochs: 1 };
        assert!(matches!(
            reg.create_mlm("roberta", &corpus(), p),
            Err(EvalError::Config(_))
        ));
        assert!(matches!(
            reg.create_retrieval("nope", &corpus(), p),
            Err(EvalError::Config(_))
        ));
    }
}
