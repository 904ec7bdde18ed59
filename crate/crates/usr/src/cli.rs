//! The `usr` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use usr_core::corpus::{AnnotatedDataset, DialogCorpus, DialogExample, Quality};
use usr_core::mlm::{fine_tune_mlm, MlmOrientation};
use usr_core::regression::{
    fit_per_annotator, fit_regression, human_rows, RegressionModel, SubMetricMapping,
};
use usr_core::retrieval::train_dr;
use usr_core::stats::{
    spearman, HumanAggregation, MetricScore, PValueMethod, ScoreTable, TableOptions,
};
use usr_core::tokens::TOKENIZER_VERSION;

use crate::backends::{save_checkpoint, BackendRegistry, BuildParams, Manifest, TrainTarget};
use crate::config::{CorpusFormat, NormStatsMode, RunConfig};
use crate::dataset::{load_dataset, DatasetFormat};
use crate::error::{EvalError, Result};
use crate::metrics::{select_metrics, thread_pool, usr_batch, Metric, Scorers};
use crate::models::{FitMode, ModelFile};
use crate::report::{Layout, ReportDocument, ReportFormat};
use crate::scores::{read_scores, ScoreHeader, ScoreWriter};
use crate::{adapters, benchmark, fingerprint};

#[derive(Debug, Parser)]
#[command(
    name = "usr",
    version,
    about = "Reference-free dialog evaluation and correlation benchmarking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every example of a dataset with the selected metrics.
    Eval,
    /// Train a backend and save a checkpoint.
    Train {
        #[arg(long, value_enum)]
        target: TrainTarget,
    },
    /// Fit the quality-to-overall regression.
    FitRegression {
        #[arg(long, value_enum, default_value_t)]
        mode: FitMode,
    },
    /// Correlate metric scores with human ratings.
    Benchmark,
    /// Inter-annotator agreement per quality.
    Agreement,
    /// Re-render a JSON report.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// List only metrics that have results.
        #[arg(long)]
        compact: bool,
    },
}

fn parse_orientation(s: &str) -> std::result::Result<MlmOrientation, String> {
    match s {
        "higher-is-better" => Ok(MlmOrientation::HigherIsBetter),
        "raw-nll" => Ok(MlmOrientation::RawNll),
        _ => Err("expected higher-is-better or raw-nll".into()),
    }
}

fn parse_aggregation(s: &str) -> std::result::Result<HumanAggregation, String> {
    match s {
        "mean" => Ok(HumanAggregation::Mean),
        "median" => Ok(HumanAggregation::Median),
        _ => Err("expected mean or median".into()),
    }
}

fn parse_p_method(s: &str) -> std::result::Result<PValueMethod, String> {
    match s {
        "t-approx" => Ok(PValueMethod::TApprox),
        "permutation" => Ok(PValueMethod::Permutation),
        _ => Err("expected t-approx or permutation".into()),
    }
}

fn is_false(b: &bool) -> bool {
    !b
}

/// Options shared by every command. Only the ones given are serialized, so
/// they can be layered over a config file.
#[derive(Debug, Default, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Options {
    /// TOML file with defaults for any of these options.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<DatasetFormat>,
    /// JSONL file of annotation records kept apart from the examples.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    /// Comma-separated metric names.
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<String>>,
    /// slot=id-or-checkpoint, e.g. `mlm=toy-counting,dr-c=out/checkpoints/dr-context`.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub backend: Vec<String>,
    /// Sub-metric mapping: a preset (topical-chat, persona-chat) or quality=metric pairs.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mapping: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_stats: Option<NormStatsMode>,
    #[arg(long, global = true, value_parser = parse_orientation)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mlm_orientation: Option<MlmOrientation>,
    /// Divide the MLM score by the response length.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "is_false")]
    pub mlm_normalize: bool,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "is_false")]
    pub include_ground_truth: bool,
    /// How annotators' ratings of a response are combined: mean or median.
    #[arg(long, global = true, value_parser = parse_aggregation)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<HumanAggregation>,
    /// System-level p-values: t-approx or permutation.
    #[arg(long, global = true, value_parser = parse_p_method)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system_p_value: Option<PValueMethod>,
    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_format: Option<ReportFormat>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Regression model file, for `usr`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Score file to benchmark or refit on.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_ratio: Option<usize>,
    /// Training corpus; defaults to the dialogs of --dataset.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_format: Option<CorpusFormat>,
}

impl Options {
    pub fn resolve(&self) -> Result<RunConfig> {
        let flags = serde_json::to_value(self).expect("options serialize");
        let mut cfg = RunConfig::resolve(self.config.as_deref(), flags)?;
        for spec in &self.backend {
            cfg.backend.apply(spec)?;
        }
        Ok(cfg)
    }
}

/// Runs one command; returns the lines to print on success.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let cfg = cli.options.resolve()?;
    let registry = BackendRegistry::default();
    match &cli.command {
        Command::Eval => cmd_eval(&cfg, &registry),
        Command::Train { target } => cmd_train(&cfg, &registry, *target),
        Command::FitRegression { mode } => cmd_fit_regression(&cfg, *mode),
        Command::Benchmark => cmd_benchmark(&cfg),
        Command::Agreement => cmd_agreement(&cfg),
        Command::Report { input, compact } => cmd_report(&cfg, input, *compact),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).map_err(|e| EvalError::io(&cfg.out, e))?;
    Ok(&cfg.out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| EvalError::io(path, e))
}

fn load(cfg: &RunConfig) -> Result<AnnotatedDataset> {
    let ds = load_dataset(cfg.dataset_path()?, cfg.format)?;
    match &cfg.annotations {
        None => Ok(ds),
        Some(path) if !path.is_file() => Err(EvalError::Data(format!(
            "annotations file {} does not exist; pass the JSONL annotation records with --annotations",
            path.display()
        ))),
        Some(path) => crate::dataset::attach_annotations(&ds, path),
    }
}

fn load_annotated(cfg: &RunConfig) -> Result<AnnotatedDataset> {
    let ds = load(cfg)?;
    if ds.annotations().is_empty() {
        let path = cfg.dataset_path()?;
        return Err(EvalError::Data(format!(
            "{} has no annotation records; add them to it or pass --annotations <file>",
            path.display()
        )));
    }
    Ok(ds)
}

fn mapping(cfg: &RunConfig) -> Result<SubMetricMapping> {
    Ok(SubMetricMapping::parse(&cfg.mapping)?)
}

pub fn cmd_eval(cfg: &RunConfig, registry: &BackendRegistry) -> Result<Vec<String>> {
    let ds = load(cfg)?;
    let mapping = mapping(cfg)?;
    let metrics = select_metrics(&cfg.metrics, &mapping)?;
    let model = if metrics.contains(&Metric::Usr) {
        let path = cfg.model.as_deref().ok_or_else(|| {
            EvalError::Config(
                "metric `usr` needs a regression model (--model, from `usr fit-regression`)".into(),
            )
        })?;
        Some(ModelFile::load(path)?)
    } else {
        None
    };
    let scorers = Scorers::resolve(cfg, registry, &ds, &metrics)?;
    let pool = thread_pool(cfg.workers)?;

    let path = out_dir(cfg)?.join("scores.jsonl");
    let header = ScoreHeader {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        tokenizer: TOKENIZER_VERSION.into(),
    };
    let mut writer = ScoreWriter::open(&path, &header)?;
    let resumed = writer.done_count();
    let mut all = read_scores(&path)?.scores;
    let mut written = 0;
    for &metric in &metrics {
        let fresh = if metric == Metric::Usr {
            let ids: Vec<&str> = ds
                .examples()
                .iter()
                .map(|e| e.example_id.as_str())
                .collect();
            let model = model.as_ref().expect("loaded above");
            usr_batch(model, &mapping, cfg.norm_stats, &ids, &all)?
        } else {
            let todo: Vec<&DialogExample> = ds
                .examples()
                .iter()
                .filter(|e| !writer.is_done(&e.example_id, metric.name()))
                .collect();
            scorers.score_all(&pool, metric, &todo)?
        };
        written += writer.append(&fresh)?;
        all.extend(fresh);
    }
    Ok(vec![format!(
        "wrote {written} scores to {} ({resumed} already present; config {}, seed {})",
        path.display(),
        header.config_hash,
        cfg.seed
    )])
}

fn training_corpus(cfg: &RunConfig) -> Result<(DialogCorpus, String)> {
    let corpus = match (&cfg.corpus, cfg.corpus_format) {
        (Some(p), CorpusFormat::TopicalChat) => adapters::load_topical_chat_conversations(p)?,
        (Some(p), CorpusFormat::Convai2) => adapters::load_convai2(p)?,
        (Some(p), CorpusFormat::Dataset) => {
            adapters::corpus_from_dataset(&load_dataset(p, cfg.format)?)
        }
        (None, _) => adapters::corpus_from_dataset(&load(cfg)?),
    };
    let fp = fingerprint::corpus(&corpus);
    Ok((corpus, fp))
}

pub fn cmd_train(
    cfg: &RunConfig,
    registry: &BackendRegistry,
    target: TrainTarget,
) -> Result<Vec<String>> {
    let (slot, spec) = match target {
        TrainTarget::Mlm => ("mlm", &cfg.backend.mlm),
        TrainTarget::DrContext => ("dr-c", &cfg.backend.dr_context),
        TrainTarget::DrFact => ("dr-f", &cfg.backend.dr_fact),
    };
    let id = spec.as_deref().ok_or_else(|| {
        EvalError::Config(format!(
            "training {} needs --backend {slot}=<registry id>",
            target.key()
        ))
    })?;
    let (corpus, corpus_fingerprint) = training_corpus(cfg)?;
    let (epochs, negative_ratio) = match target {
        TrainTarget::Mlm => (cfg.mlm_epochs(), None),
        _ => (cfg.dr_epochs(), Some(cfg.negative_ratio)),
    };
    let params = BuildParams {
        seed: cfg.seed,
        epochs,
    };
    let state = match target.variant() {
        None => {
            fine_tune_mlm(registry.create_mlm(id, &corpus, params)?, &corpus, epochs)?.state()?
        }
        Some(variant) => {
            let backend = registry.create_retrieval(id, &corpus, params)?;
            train_dr(backend, &corpus, variant, cfg.negative_ratio, cfg.seed)?.state()?
        }
    };
    let manifest = Manifest {
        backend_id: id.to_string(),
        target,
        corpus_fingerprint,
        epochs,
        seed: cfg.seed,
        negative_ratio,
        config_hash: cfg.hash(),
        tokenizer: TOKENIZER_VERSION.into(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    let dir = out_dir(cfg)?.join("checkpoints").join(target.key());
    save_checkpoint(&dir, &manifest, &state)?;
    Ok(vec![format!(
        "saved {} checkpoint of {id} to {}",
        target.key(),
        dir.display()
    )])
}

fn model_file(
    cfg: &RunConfig,
    ds: &AnnotatedDataset,
    model: RegressionModel,
    rows: &[(usr_core::regression::QualityVector, f64)],
    mode: FitMode,
    mapping: &SubMetricMapping,
    annotator: Option<&str>,
) -> ModelFile {
    let predicted: Vec<f64> = rows.iter().map(|(qv, _)| model.predict(qv)).collect();
    let observed: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
    ModelFile {
        model,
        profile: model.weight_profile(),
        mode,
        mapping: mapping.clone(),
        annotator: annotator.map(str::to_string),
        rows: rows.len(),
        fit_spearman: spearman(&predicted, &observed).ok().map(|c| c.coefficient),
        dataset_fingerprint: fingerprint::dataset(ds),
        config_hash: cfg.hash(),
        seed: cfg.seed,
    }
}

fn profile_line(name: &str, m: &ModelFile) -> String {
    let cells: Vec<String> = m.profile.iter().map(|p| format!("{p:.4}")).collect();
    let fit = m
        .fit_spearman
        .map_or("n/a".to_string(), |s| format!("{s:.4}"));
    format!("{name:<12} {}  spearman {fit}", cells.join(" "))
}

fn profile_header() -> String {
    let names: Vec<&str> = Quality::SPECIFIC.iter().map(|q| q.key()).collect();
    format!("{:<12} {}", "model", names.join(" "))
}

pub fn cmd_fit_regression(cfg: &RunConfig, mode: FitMode) -> Result<Vec<String>> {
    let ds = load_annotated(cfg)?;
    let mapping = mapping(cfg)?;
    let out = out_dir(cfg)?.to_path_buf();
    match mode {
        FitMode::Human => {
            let rows = human_rows(&ds);
            let model = fit_regression(&rows)?;
            let file = model_file(cfg, &ds, model, &rows, mode, &mapping, None);
            let path = out.join("model.json");
            file.save(&path)?;
            Ok(vec![
                profile_header(),
                profile_line("human", &file),
                format!("saved {}", path.display()),
            ])
        }
        FitMode::PerAnnotator => {
            let fit = fit_per_annotator(&ds)?;
            let mut lines = vec![profile_header()];
            let mut table = String::new();
            for (annotator, model) in &fit.models {
                let rows: Vec<_> = ds
                    .annotations()
                    .iter()
                    .filter(|a| &a.annotator_id == annotator)
                    .map(|a| {
                        (
                            usr_core::regression::QualityVector::from_annotation(a),
                            f64::from(a.overall),
                        )
                    })
                    .collect();
                let file = model_file(cfg, &ds, *model, &rows, mode, &mapping, Some(annotator));
                file.save(
                    &out.join("models")
                        .join(format!("{}.json", adapters::slug(annotator))),
                )?;
                let line = profile_line(annotator, &file);
                table.push_str(&line);
                table.push('\n');
                lines.push(line);
            }
            for (annotator, reason) in &fit.excluded {
                lines.push(format!("excluded {annotator}: {reason}"));
            }
            let path = out.join("weight-profiles.txt");
            write(
                &path,
                &format!(
                    "{}\n{table}config {} seed {}\n",
                    profile_header(),
                    cfg.hash(),
                    cfg.seed
                ),
            )?;
            lines.push(format!(
                "saved {} models and {}",
                fit.models.len(),
                path.display()
            ));
            Ok(lines)
        }
        FitMode::Refit => {
            let scores = read_scores(scores_path(cfg)?)?.scores;
            let overall: std::collections::BTreeMap<&str, f64> =
                human_overall(&ds, cfg.aggregation);
            let mut rows = Vec::new();
            let mut by_example: std::collections::BTreeMap<
                &str,
                std::collections::BTreeMap<&str, f64>,
            > = Default::default();
            for s in &scores {
                if let Some(v) = s.value {
                    by_example
                        .entry(s.example_id.as_str())
                        .or_default()
                        .insert(s.metric.as_str(), v);
                }
            }
            for ex in ds
                .examples()
                .iter()
                .filter(|e| cfg.include_ground_truth || !e.is_ground_truth())
            {
                let (Some(y), Some(sub)) = (
                    overall.get(ex.example_id.as_str()),
                    by_example.get(ex.example_id.as_str()),
                ) else {
                    continue;
                };
                if let Ok(qv) = mapping.assemble(&ex.example_id, sub) {
                    rows.push((qv, *y));
                }
            }
            let model = fit_regression(&rows)?;
            let file = model_file(cfg, &ds, model, &rows, mode, &mapping, None);
            let path = out.join("model.json");
            file.save(&path)?;
            Ok(vec![
                profile_header(),
                profile_line("refit", &file),
                format!("saved {}", path.display()),
            ])
        }
    }
}

fn human_overall(
    ds: &AnnotatedDataset,
    aggregation: HumanAggregation,
) -> std::collections::BTreeMap<&str, f64> {
    ds.ratings_by_example()
        .into_iter()
        .filter_map(|(id, anns)| {
            let mut v: Vec<f64> = anns.iter().map(|a| f64::from(a.overall)).collect();
            aggregation.apply(&mut v).map(|m| (id, m))
        })
        .collect()
}

fn scores_path(cfg: &RunConfig) -> Result<&Path> {
    let path = cfg
        .scores
        .as_deref()
        .ok_or_else(|| EvalError::Config("no score file given (use --scores)".into()))?;
    if !path.is_file() {
        return Err(EvalError::Data(format!(
            "score file {} does not exist; run `usr eval` first",
            path.display()
        )));
    }
    Ok(path)
}

fn save_report(
    cfg: &RunConfig,
    stem: &str,
    doc: &ReportDocument,
    layout: Layout,
) -> Result<Vec<String>> {
    let out = out_dir(cfg)?;
    let mut lines = Vec::new();
    let json = out.join(format!("{stem}.json"));
    write(&json, &doc.render(ReportFormat::Json, layout))?;
    if cfg.report_format != ReportFormat::Json {
        let path = out.join(format!("{stem}.{}", cfg.report_format.extension()));
        let text = doc.render(cfg.report_format, layout);
        write(&path, &text)?;
        lines.extend(text.lines().map(str::to_string));
        lines.push(format!("saved {} and {}", path.display(), json.display()));
    } else {
        lines.push(format!("saved {}", json.display()));
    }
    Ok(lines)
}

pub fn cmd_benchmark(cfg: &RunConfig) -> Result<Vec<String>> {
    let ds = load_annotated(cfg)?;
    let scores: Vec<MetricScore> = read_scores(scores_path(cfg)?)?.scores;
    let opts = TableOptions {
        include_ground_truth: cfg.include_ground_truth,
        aggregation: cfg.aggregation,
    };
    let table = ScoreTable::from_dataset(&ds, &scores, opts)?;
    let reports = benchmark::correlation_reports(&table, cfg.system_p_value);
    let agreement = benchmark::agreement_table(&ds);
    let doc = ReportDocument::new(&cfg.hash(), cfg.seed, &reports, &agreement);
    let mut lines = save_report(cfg, "report", &doc, Layout::Catalogue)?;
    lines.push(format!("{} responses after exclusions", table.len()));
    Ok(lines)
}

pub fn cmd_agreement(cfg: &RunConfig) -> Result<Vec<String>> {
    let ds = load_annotated(cfg)?;
    let agreement = benchmark::agreement_table(&ds);
    if agreement.is_empty() {
        return Err(usr_core::Error::InsufficientData(
            "no annotator pair shares three rated examples".into(),
        )
        .into());
    }
    save_report(
        cfg,
        "agreement",
        &ReportDocument::new(&cfg.hash(), cfg.seed, &[], &agreement),
        Layout::Compact,
    )
}

pub fn cmd_report(cfg: &RunConfig, input: &Path, compact: bool) -> Result<Vec<String>> {
    let text = fs::read_to_string(input).map_err(|e| EvalError::io(input, e))?;
    let doc = ReportDocument::from_json(&text)?;
    let layout = if compact {
        Layout::Compact
    } else {
        Layout::Catalogue
    };
    Ok(doc
        .render(cfg.report_format, layout)
        .lines()
        .map(str::to_string)
        .collect())
}
