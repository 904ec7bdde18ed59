//! Metric registry and the scoring pipeline behind `usr eval`.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use rayon::ThreadPool;
use usr_core::corpus::{AnnotatedDataset, DialogCorpus, DialogExample, RetrievalVariant};
use usr_core::embedding::{
    bertscore_recall, embedding_average, greedy_matching, vector_extrema, HashEmbedder,
    NeighbourMixEncoder, OovPolicy, StaticEmbeddings, WordEmbedder,
};
use usr_core::mlm::{mlm_metric_value, mlm_score, MlmOrientation};
use usr_core::overlap::{bleu_score, f1_score, rouge_l_score, Meteor};
use usr_core::regression::{
    usr_scores, NormStats, QualityVector, SubMetricMapping, USR_METRIC_NAME,
};
use usr_core::retrieval::dr_score;
use usr_core::stats::MetricScore;

use crate::backends::{is_checkpoint, BackendRegistry, BuildParams, MlmAdapter, RetrievalAdapter};
use crate::config::{NormStatsMode, RunConfig};
use crate::error::{EvalError, Result};
use crate::models::{FitMode, ModelFile};

pub const METRICS: [&str; 15] = [
    "f1",
    "bleu-1",
    "bleu-2",
    "bleu-3",
    "bleu-4",
    "meteor",
    "rouge-l",
    "greedy-matching",
    "embedding-average",
    "vector-extrema",
    "bertscore",
    "usr-mlm",
    "usr-dr-c",
    "usr-dr-f",
    "usr",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    F1,
    Bleu(usize),
    Meteor,
    RougeL,
    Greedy,
    Average,
    Extrema,
    BertScore,
    Mlm,
    Dr(RetrievalVariant),
    Usr,
}

impl Metric {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "f1" => Metric::F1,
            "bleu-1" => Metric::Bleu(1),
            "bleu-2" => Metric::Bleu(2),
            "bleu-3" => Metric::Bleu(3),
            "bleu-4" => Metric::Bleu(4),
            "meteor" => Metric::Meteor,
            "rouge-l" => Metric::RougeL,
            "greedy-matching" => Metric::Greedy,
            "embedding-average" => Metric::Average,
            "vector-extrema" => Metric::Extrema,
            "bertscore" => Metric::BertScore,
            "usr-mlm" => Metric::Mlm,
            "usr-dr-c" => Metric::Dr(RetrievalVariant::Context),
            "usr-dr-f" => Metric::Dr(RetrievalVariant::Fact),
            "usr" => Metric::Usr,
            other => {
                return Err(EvalError::Config(format!(
                    "unknown metric `{other}` (known: {})",
                    METRICS.join(", ")
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::Bleu(n) => METRICS[n],
            Metric::Meteor => "meteor",
            Metric::RougeL => "rouge-l",
            Metric::Greedy => "greedy-matching",
            Metric::Average => "embedding-average",
            Metric::Extrema => "vector-extrema",
            Metric::BertScore => "bertscore",
            Metric::Mlm => "usr-mlm",
            Metric::Dr(RetrievalVariant::Context) => "usr-dr-c",
            Metric::Dr(RetrievalVariant::Fact) => "usr-dr-f",
            Metric::Usr => USR_METRIC_NAME,
        }
    }

    pub fn needs_reference(self) -> bool {
        matches!(
            self,
            Metric::F1
                | Metric::Bleu(_)
                | Metric::Meteor
                | Metric::RougeL
                | Metric::Greedy
                | Metric::Average
                | Metric::Extrema
                | Metric::BertScore
        )
    }
}

/// Parses a metric list, adding the sub-metrics `usr` depends on ahead of
/// it. Duplicates are dropped; order is otherwise kept.
pub fn select_metrics(names: &[String], mapping: &SubMetricMapping) -> Result<Vec<Metric>> {
    let mut out: Vec<Metric> = Vec::new();
    let mut push = |m: Metric| {
        if !out.contains(&m) {
            out.push(m);
        }
    };
    for name in names {
        let m = Metric::parse(name)?;
        if m == Metric::Usr {
            for sub in mapping.metrics() {
                let sub = Metric::parse(sub)?;
                if sub == Metric::Usr {
                    return Err(EvalError::Config(
                        "`usr` cannot be one of its own sub-metrics".into(),
                    ));
                }
                push(sub);
            }
        }
        push(m);
    }
    Ok(out)
}

/// Word vectors: a loaded table or the hashed toy embedder.
#[derive(Debug, Clone)]
pub enum Words {
    Hash(HashEmbedder),
    Table(StaticEmbeddings),
}

impl WordEmbedder for Words {
    fn dim(&self) -> usize {
        match self {
            Words::Hash(e) => e.dim(),
            Words::Table(e) => e.dim(),
        }
    }

    fn lookup(&self, token: &str) -> Option<Cow<'_, [f64]>> {
        match self {
            Words::Hash(e) => e.lookup(token),
            Words::Table(e) => e.lookup(token),
        }
    }

    fn oov_policy(&self) -> OovPolicy {
        match self {
            Words::Hash(e) => e.oov_policy(),
            Words::Table(e) => e.oov_policy(),
        }
    }
}

pub const TOY_HASH_DIM: usize = 64;

/// Everything needed to score examples: embeddings and model backends.
#[derive(Default)]
pub struct Scorers {
    pub words: Option<Words>,
    pub encoder: Option<NeighbourMixEncoder<Words>>,
    pub mlm: Option<Box<dyn MlmAdapter>>,
    pub dr_context: Option<Box<dyn RetrievalAdapter>>,
    pub dr_fact: Option<Box<dyn RetrievalAdapter>>,
    pub mlm_orientation: MlmOrientation,
    pub mlm_normalize: bool,
    pub meteor: Meteor,
}

fn missing_backend(metric: Metric, slot: &str, what: &str) -> EvalError {
    EvalError::Config(format!(
        "metric `{}` needs a {what}; pass --backend {slot}=<registry id or checkpoint dir>",
        metric.name()
    ))
}

impl Scorers {
    /// Resolves the backends `metrics` need, failing before any scoring when
    /// one is not configured.
    pub fn resolve(
        cfg: &RunConfig,
        registry: &BackendRegistry,
        ds: &AnnotatedDataset,
        metrics: &[Metric],
    ) -> Result<Self> {
        let mut s = Scorers {
            mlm_orientation: cfg.mlm_orientation,
            mlm_normalize: cfg.mlm_normalize,
            ..Scorers::default()
        };
        let corpus = crate::adapters::corpus_from_dataset(ds);
        let params = BuildParams {
            seed: cfg.seed,
            epochs: cfg.dr_epochs(),
        };
        let needs = |pred: fn(&Metric) -> bool| metrics.iter().find(|m| pred(m)).copied();

        if let Some(m) = needs(|m| matches!(m, Metric::Greedy | Metric::Average | Metric::Extrema))
        {
            let spec = cfg
                .backend
                .embeddings
                .as_deref()
                .ok_or_else(|| missing_backend(m, "embeddings", "word-embedding table"))?;
            s.words = Some(load_words(spec, cfg.seed)?);
        }
        if let Some(m) = needs(|m| *m == Metric::BertScore) {
            let spec = cfg
                .backend
                .encoder
                .as_deref()
                .ok_or_else(|| missing_backend(m, "encoder", "contextual encoder"))?;
            if spec != "toy-mix" {
                return Err(EvalError::Config(format!(
                    "unknown encoder `{spec}` (known: toy-mix)"
                )));
            }
            let words = match &cfg.backend.embeddings {
                Some(e) => load_words(e, cfg.seed)?,
                None => Words::Hash(HashEmbedder::new(TOY_HASH_DIM, cfg.seed)),
            };
            s.encoder = Some(NeighbourMixEncoder { words });
        }
        if let Some(m) = needs(|m| *m == Metric::Mlm) {
            let spec = cfg
                .backend
                .mlm
                .as_deref()
                .ok_or_else(|| missing_backend(m, "mlm", "masked-LM backend"))?;
            s.mlm = Some(if Path::new(spec).is_dir() {
                checkpoint_dir(spec)?;
                registry.load_mlm(Path::new(spec))?.1
            } else {
                registry.create_mlm(spec, &corpus, params)?
            });
        }
        for variant in [RetrievalVariant::Context, RetrievalVariant::Fact] {
            let m = Metric::Dr(variant);
            if !metrics.contains(&m) {
                continue;
            }
            if variant == RetrievalVariant::Fact && ds.examples().iter().all(|e| e.fact.is_empty())
            {
                return Err(usr_core::Error::UnavailableVariant("fact".into()).into());
            }
            let (slot, field) = match variant {
                RetrievalVariant::Context => ("dr-c", &cfg.backend.dr_context),
                RetrievalVariant::Fact => ("dr-f", &cfg.backend.dr_fact),
            };
            let spec = field
                .as_deref()
                .ok_or_else(|| missing_backend(m, slot, "retrieval backend"))?;
            let backend = if Path::new(spec).is_dir() {
                checkpoint_dir(spec)?;
                registry.load_retrieval(Path::new(spec), variant)?.1
            } else {
                registry.create_retrieval(spec, &corpus, params)?
            };
            match variant {
                RetrievalVariant::Context => s.dr_context = Some(backend),
                RetrievalVariant::Fact => s.dr_fact = Some(backend),
            }
        }
        Ok(s)
    }

    /// Score of one example, or a missing-score record when the metric is
    /// undefined for it. Backend failures abort.
    pub fn score(&self, metric: Metric, ex: &DialogExample) -> Result<MetricScore> {
        let name = metric.name();
        let reference = match (metric.needs_reference(), &ex.reference) {
            (true, None) => return Ok(MetricScore::missing(&ex.example_id, name, "no reference")),
            (_, r) => r.as_deref().unwrap_or(&[]),
        };
        let r: &[String] = &ex.response;
        let value = match metric {
            Metric::F1 => f1_score(r, reference),
            Metric::Bleu(n) => bleu_score(r, &[reference], n),
            Metric::Meteor => self.meteor.score(r, reference),
            Metric::RougeL => rouge_l_score(r, reference),
            Metric::Greedy => greedy_matching(r, reference, self.words.as_ref().expect("resolved")),
            Metric::Average => {
                embedding_average(r, reference, self.words.as_ref().expect("resolved"))
            }
            Metric::Extrema => vector_extrema(r, reference, self.words.as_ref().expect("resolved")),
            Metric::BertScore => {
                bertscore_recall(r, reference, self.encoder.as_ref().expect("resolved"))
            }
            Metric::Mlm => mlm_score(&ex.context, r, self.mlm.as_deref().expect("resolved"))
                .map(|s| mlm_metric_value(&s, self.mlm_orientation, self.mlm_normalize)),
            Metric::Dr(v) => {
                let backend = match v {
                    RetrievalVariant::Context => self.dr_context.as_deref(),
                    RetrievalVariant::Fact => self.dr_fact.as_deref(),
                };
                ex.retrieval_input(v)
                    .and_then(|x| dr_score(&x, r, backend.expect("resolved")))
            }
            Metric::Usr => {
                return Err(EvalError::Config(
                    "`usr` is scored per batch, not per example".into(),
                ))
            }
        };
        use usr_core::Error as E;
        match value {
            Ok(v) if v.is_finite() => Ok(MetricScore::new(&ex.example_id, name, v)),
            Ok(v) => Ok(MetricScore::missing(
                &ex.example_id,
                name,
                format!("non-finite value {v}"),
            )),
            Err(e @ (E::UndefinedScore(_) | E::Precondition(_) | E::UnavailableVariant(_))) => {
                Ok(MetricScore::missing(&ex.example_id, name, e.to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Scores `examples` on `pool`, keeping example order.
    pub fn score_all(
        &self,
        pool: &ThreadPool,
        metric: Metric,
        examples: &[&DialogExample],
    ) -> Result<Vec<MetricScore>> {
        pool.install(|| {
            examples
                .par_iter()
                .map(|ex| self.score(metric, ex))
                .collect()
        })
    }
}

fn checkpoint_dir(spec: &str) -> Result<()> {
    if is_checkpoint(Path::new(spec)) {
        Ok(())
    } else {
        Err(EvalError::Config(format!(
            "{spec} is a directory but not a checkpoint (no manifest.json)"
        )))
    }
}

fn load_words(spec: &str, seed: u64) -> Result<Words> {
    if spec == "toy-hash" {
        Ok(Words::Hash(HashEmbedder::new(TOY_HASH_DIM, seed)))
    } else {
        Ok(Words::Table(crate::embeddings::load_embeddings(
            Path::new(spec),
            OovPolicy::Skip,
        )?))
    }
}

pub fn thread_pool(workers: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EvalError::Config(format!("cannot start {workers} workers: {e}")))
}

/// USR scores for `example_ids` from their mapped sub-metric scores. An
/// example lacking one of them gets a missing-score record; the rest are
/// z-scored together.
pub fn usr_batch(
    model: &ModelFile,
    mapping: &SubMetricMapping,
    norm: NormStatsMode,
    example_ids: &[&str],
    scores: &[MetricScore],
) -> Result<Vec<MetricScore>> {
    if model.mode == FitMode::Refit && model.mapping != *mapping {
        return Err(EvalError::Config(
            "the model was refit under a different sub-metric mapping".into(),
        ));
    }
    let mut by_example: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for s in scores {
        if let Some(v) = s.value {
            by_example
                .entry(s.example_id.as_str())
                .or_default()
                .insert(s.metric.as_str(), v);
        }
    }
    let empty = BTreeMap::new();
    let mut batch: Vec<(String, QualityVector)> = Vec::new();
    let mut slots: Vec<std::result::Result<usize, String>> = Vec::new();
    for id in example_ids {
        match mapping.assemble(id, by_example.get(id).unwrap_or(&empty)) {
            Ok(qv) => {
                slots.push(Ok(batch.len()));
                batch.push((id.to_string(), qv));
            }
            Err(e) => slots.push(Err(e.to_string())),
        }
    }
    let stats = match norm {
        NormStatsMode::Batch => NormStats::Batch,
        NormStatsMode::Frozen => NormStats::Frozen(model.model.normalizer),
    };
    let scored = if batch.is_empty() {
        Vec::new()
    } else {
        usr_scores(&model.model, &batch, stats)?
    };
    Ok(example_ids
        .iter()
        .zip(slots)
        .map(|(id, slot)| match slot {
            Ok(i) => scored[i].clone(),
            Err(reason) => MetricScore::missing(*id, USR_METRIC_NAME, reason),
        })
        .collect())
}

/// The `k` most frequent tokens over all dialog turns; ties go to the
/// lexicographically smaller token.
pub fn most_frequent_tokens(corpus: &DialogCorpus, k: usize) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in corpus.dialog_turns().flat_map(|t| t.iter()) {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(k)
        .map(|(t, _)| t.to_string())
        .collect()
}

/// Mean F-1 of one fixed response against every turn that follows another
/// turn.
pub fn constant_response_f1(corpus: &DialogCorpus, response: &[String]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for d in &corpus.dialogs {
        for (_, gold) in d.gold_pairs() {
            if gold.is_empty() {
                continue;
            }
            total += f1_score(response, gold)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::Data("corpus has no responses".into()));
    }
    Ok(total / n as f64)
}
