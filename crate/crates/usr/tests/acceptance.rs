//! Acceptance suite: one PASS / FAIL / SKIP line per criterion.
//!
//! Criteria 1 to 3 need the released quality annotations
//! (`tc_usr_data.json`, `pc_usr_data.json`) in `$USR_DATA_DIR`. Criterion 4
//! needs the Topical-Chat `test_freq.json`, found through
//! `$USR_TOPICAL_CHAT_TEST_FREQ` or `$USR_DATA_DIR`, and is skipped without
//! it. Embedding rows of criterion 3 use the word vectors in
//! `$USR_EMBEDDINGS` when set.

use std::cell::RefCell;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use usr_core::corpus::{
    build_retrieval_examples, AnnotatedDataset, Dialog, DialogContext, DialogCorpus, Fact, Quality,
    RetrievalVariant,
};
use usr_core::embedding::OovPolicy;
use usr_core::mlm::{fine_tune_mlm, mlm_score, CountingLm, MaskedLmBackend, UniformLm, MASK_TOKEN};
use usr_core::regression::{
    fit_human, fit_regression, human_rows, usr_scores, NormStats, QualityVector, RegressionModel,
    SubMetricMapping,
};
use usr_core::retrieval::{accuracy, dr_score, train_dr, BowLogistic};
use usr_core::stats::{
    inter_annotator_agreement, spearman, system_level, turn_level, MetricScore, ScoreTable,
    TableOptions,
};
use usr_core::{TokenSequence, GROUND_TRUTH_SYSTEM};
use usr_eval::adapters::{
    corpus_from_dataset, load_topical_chat_conversations, load_usr_release, Release,
};
use usr_eval::embeddings::load_embeddings;
use usr_eval::metrics::{
    constant_response_f1, most_frequent_tokens, thread_pool, usr_batch, Metric, Scorers, Words,
};
use usr_eval::models::{FitMode, ModelFile};

const COMPLETENESS: f64 = 0.9654;
const COMPLETENESS_TOL: f64 = 0.02;
const AGREEMENT_TOL: f64 = 0.02;
const OVERLAP_TOL: f64 = 0.05;
const METEOR_TOL: f64 = 0.08;
const ADVERSARIAL_F1: f64 = 0.256;
const ADVERSARIAL_TOL: f64 = 0.005;
const ORACLE_TOL: f64 = 1e-12;
const INVARIANCE_TOL: f64 = 1e-9;
const RECOVERY_TOL: f64 = 1e-6;

/// (Spearman, Pearson) per quality in `Quality::ALL` order.
const TC_AGREEMENT: [(f64, f64); 6] = [
    (0.5102, 0.5102),
    (0.4871, 0.4864),
    (0.5599, 0.5575),
    (0.5811, 0.5754),
    (0.7090, 0.7090),
    (0.7183, 0.7096),
];
const PC_AGREEMENT: [(f64, f64); 6] = [
    (0.2984, 0.2984),
    (0.4842, 0.4716),
    (0.6125, 0.6130),
    (0.4318, 0.4288),
    (0.8115, 0.8115),
    (0.6577, 0.6603),
];

/// Topical-Chat turn-level Spearman against overall quality.
const TC_OVERLAP: [(&str, f64, f64); 4] = [
    ("f1", 0.1645, OVERLAP_TOL),
    ("bleu-2", 0.2862, OVERLAP_TOL),
    ("meteor", 0.3365, METEOR_TOL),
    ("rouge-l", 0.2745, OVERLAP_TOL),
];
const TC_EMBEDDING_ROWS: [&str; 3] = ["greedy-matching", "embedding-average", "vector-extrema"];

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Verdict::{Fail, Pass, Skip};

fn within_time(v: Verdict, started: Instant, limit: Duration) -> Verdict {
    let took = started.elapsed();
    match v {
        Pass(d) if took >= limit => Fail(format!("{d}; took {took:.2?}, limit {limit:?}")),
        Pass(d) => Pass(format!("{d}; {took:.2?}")),
        other => other,
    }
}

fn data_dir() -> Option<PathBuf> {
    std::env::var_os("USR_DATA_DIR").map(PathBuf::from)
}

fn release(name: &str, which: Release) -> Result<AnnotatedDataset, String> {
    let dir = data_dir().ok_or_else(|| {
        format!(
            "released annotations not available: set USR_DATA_DIR to a directory holding {name}"
        )
    })?;
    let path = dir.join(name);
    if !path.is_file() {
        return Err(format!(
            "released annotations not available: {} not found",
            path.display()
        ));
    }
    load_usr_release(&path, which).map_err(|e| e.to_string())
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let ds = match release("tc_usr_data.json", Release::TopicalChat) {
        Ok(ds) => ds,
        Err(e) => return Fail(e),
    };
    let rows = human_rows(&ds);
    let model = match fit_regression(&rows) {
        Ok(m) => m,
        Err(e) => return Fail(e.to_string()),
    };
    let pred: Vec<f64> = rows.iter().map(|(qv, _)| model.predict(qv)).collect();
    let obs: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
    let rho = match spearman(&pred, &obs) {
        Ok(c) => c.coefficient,
        Err(e) => return Fail(e.to_string()),
    };
    let detail = format!(
        "spearman {rho:.4} vs {COMPLETENESS} ± {COMPLETENESS_TOL} over {} responses",
        rows.len()
    );
    let v = if (rho - COMPLETENESS).abs() <= COMPLETENESS_TOL {
        Pass(detail)
    } else {
        Fail(detail)
    };
    within_time(v, t, Duration::from_secs(5))
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut misses = Vec::new();
    for (name, which, table) in [
        ("tc_usr_data.json", Release::TopicalChat, TC_AGREEMENT),
        ("pc_usr_data.json", Release::PersonaChat, PC_AGREEMENT),
    ] {
        let ds = match release(name, which) {
            Ok(ds) => ds,
            Err(e) => return Fail(e),
        };
        for (q, (s_ref, p_ref)) in Quality::ALL.into_iter().zip(table) {
            match inter_annotator_agreement(&ds, q) {
                Ok(a) => {
                    for (got, want, kind) in [
                        (a.spearman, s_ref, "spearman"),
                        (a.pearson, p_ref, "pearson"),
                    ] {
                        let d = (got - want).abs();
                        worst = worst.max(d);
                        if d > AGREEMENT_TOL {
                            misses.push(format!("{name} {q} {kind} {got:.4} vs {want}"));
                        }
                    }
                }
                Err(e) => misses.push(format!("{name} {q}: {e}")),
            }
        }
    }
    let detail = format!("24 cells, max |Δ| {worst:.4}, tolerance {AGREEMENT_TOL}");
    let v = if misses.is_empty() {
        Pass(detail)
    } else {
        Fail(format!("{detail}; off: {}", misses.join("; ")))
    };
    within_time(v, t, Duration::from_secs(10))
}

fn criterion_3() -> Verdict {
    let t = Instant::now();
    let ds = match release("tc_usr_data.json", Release::TopicalChat) {
        Ok(ds) => ds,
        Err(e) => return Fail(e),
    };
    let mut metrics: Vec<Metric> = TC_OVERLAP
        .iter()
        .map(|(m, _, _)| Metric::parse(m).expect("known"))
        .collect();
    let mut scorers = Scorers::default();
    let embeddings = std::env::var_os("USR_EMBEDDINGS").map(PathBuf::from);
    if let Some(path) = &embeddings {
        match load_embeddings(path, OovPolicy::Skip) {
            Ok(e) => {
                scorers.words = Some(Words::Table(e));
                metrics.extend(
                    TC_EMBEDDING_ROWS
                        .iter()
                        .map(|m| Metric::parse(m).expect("known")),
                );
            }
            Err(e) => return Fail(e.to_string()),
        }
    }
    let pool = thread_pool(0).expect("pool");
    let examples: Vec<_> = ds.examples().iter().collect();
    let mut scores: Vec<MetricScore> = Vec::new();
    for &m in &metrics {
        match scorers.score_all(&pool, m, &examples) {
            Ok(s) => scores.extend(s),
            Err(e) => return Fail(e.to_string()),
        }
    }
    let table = match ScoreTable::from_dataset(&ds, &scores, TableOptions::default()) {
        Ok(t) => t,
        Err(e) => return Fail(e.to_string()),
    };
    let mut cells = Vec::new();
    let mut ok = true;
    for (m, want, tol) in TC_OVERLAP {
        match turn_level(&table, m, Quality::Overall) {
            Ok(r) => {
                ok &= (r.spearman - want).abs() <= tol;
                cells.push(format!("{m} {:.4} vs {want} ± {tol}", r.spearman));
            }
            Err(e) => {
                ok = false;
                cells.push(format!("{m}: {e}"));
            }
        }
    }
    if embeddings.is_some() {
        for m in TC_EMBEDDING_ROWS {
            match turn_level(&table, m, Quality::Overall) {
                Ok(r) => {
                    ok &= r.spearman > 0.0 && r.spearman_significant();
                    cells.push(format!("{m} {:.4} p {:.3}", r.spearman, r.p_spearman));
                }
                Err(e) => {
                    ok = false;
                    cells.push(format!("{m}: {e}"));
                }
            }
        }
    } else {
        cells.push("embedding rows not checked (USR_EMBEDDINGS unset)".into());
    }
    let detail = cells.join("; ");
    within_time(
        if ok { Pass(detail) } else { Fail(detail) },
        t,
        Duration::from_secs(60),
    )
}

fn criterion_4() -> Verdict {
    let path = std::env::var_os("USR_TOPICAL_CHAT_TEST_FREQ")
        .map(PathBuf::from)
        .or_else(|| data_dir().map(|d| d.join("test_freq.json")))
        .filter(|p| p.is_file());
    let Some(path) = path else {
        return Skip("Topical-Chat test_freq.json not available".into());
    };
    let corpus = match load_topical_chat_conversations(&path) {
        Ok(c) => c,
        Err(e) => return Fail(e.to_string()),
    };
    let top = most_frequent_tokens(&corpus, 10);
    match constant_response_f1(&corpus, &top) {
        Ok(f1) => {
            let detail = format!(
                "F-1 {f1:.4} vs {ADVERSARIAL_F1} ± {ADVERSARIAL_TOL} with `{}`",
                top.join(" ")
            );
            if (f1 - ADVERSARIAL_F1).abs() <= ADVERSARIAL_TOL {
                Pass(detail)
            } else {
                Fail(detail)
            }
        }
        Err(e) => Fail(e.to_string()),
    }
}

/// Masked-LM backend that records every call and answers a fixed value.
struct Recorder {
    calls: RefCell<Vec<(Vec<String>, usize)>>,
}

impl MaskedLmBackend for Recorder {
    fn id(&self) -> &str {
        "recorder"
    }

    fn masked_log_likelihood(
        &self,
        masked: &[String],
        position: usize,
        _target: &str,
    ) -> usr_core::Result<f64> {
        self.calls.borrow_mut().push((masked.to_vec(), position));
        Ok(-0.5)
    }
}

fn random_words(
    rng: &mut ChaCha8Rng,
    vocab: usize,
    len: std::ops::RangeInclusive<usize>,
) -> Vec<String> {
    let len = rng.random_range(len);
    (0..len)
        .map(|_| format!("w{}", rng.random_range(0..vocab)))
        .collect()
}

fn sequence(words: Vec<String>) -> TokenSequence {
    TokenSequence::new(words).expect("plain words")
}

fn criterion_5a(rng: &mut ChaCha8Rng) -> Result<String, String> {
    for _ in 0..500 {
        let ctx_len = rng.random_range(1..4);
        let turns: Vec<TokenSequence> = (0..ctx_len)
            .map(|_| sequence(random_words(rng, 30, 1..=7)))
            .collect();
        let context = DialogContext::new(turns).map_err(|e| e.to_string())?;
        let response = random_words(rng, 30, 1..=9);
        let rec = Recorder {
            calls: RefCell::new(Vec::new()),
        };
        mlm_score(&context, &response, &rec).map_err(|e| e.to_string())?;
        let calls = rec.calls.into_inner();
        let offset = context.flatten().len();
        if calls.len() != response.len() {
            return Err(format!(
                "{} calls for {} response tokens",
                calls.len(),
                response.len()
            ));
        }
        for (i, (seq, pos)) in calls.iter().enumerate() {
            let masks: Vec<usize> = seq
                .iter()
                .enumerate()
                .filter(|(_, t)| *t == MASK_TOKEN)
                .map(|(k, _)| k)
                .collect();
            if *pos != offset + i || masks != [*pos] {
                return Err(format!(
                    "call {i} masked {masks:?} at {pos}, expected only {}",
                    offset + i
                ));
            }
        }
    }
    Ok("500 responses: one call per token, only the response position masked".into())
}

fn criterion_5b(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let v = rng.random_range(2..50_000usize);
        let lm = UniformLm::new(v).map_err(|e| e.to_string())?;
        let context = DialogContext::new(vec![sequence(random_words(rng, 100, 5..=5))])
            .map_err(|e| e.to_string())?;
        let r = random_words(rng, 100, 1..=19);
        let s = mlm_score(&context, &r, &lm).map_err(|e| e.to_string())?;
        worst = worst.max((s.total_nll() - r.len() as f64 * (v as f64).ln()).abs());
    }
    if worst <= INVARIANCE_TOL {
        Ok(format!("max |total_nll - |r| ln V| {worst:.1e}"))
    } else {
        Err(format!("deviation {worst:.1e} exceeds {INVARIANCE_TOL:e}"))
    }
}

/// Responses repeat one keyword of their history; everything else is noise.
fn keyword_corpus(rng: &mut ChaCha8Rng, dialogs: usize) -> DialogCorpus {
    let dialogs = (0..dialogs)
        .map(|d| {
            let key = format!("key{}", rng.random_range(0..5_000));
            let mut first = random_words(rng, 300, 5..=5);
            first.insert(rng.random_range(0..first.len()), key.clone());
            let mut second = random_words(rng, 300, 5..=5);
            second.insert(rng.random_range(0..second.len()), key);
            Dialog {
                dialog_id: format!("k{d}"),
                turns: vec![sequence(first), sequence(second)],
                fact: Fact(sequence(random_words(rng, 300, 3..=3))),
            }
        })
        .collect();
    DialogCorpus::new(dialogs)
}

fn criterion_5c(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let train = keyword_corpus(rng, 400);
    let held_out = keyword_corpus(rng, 200);
    let model = train_dr(BowLogistic::new(7), &train, RetrievalVariant::Context, 1, 7)
        .map_err(|e| e.to_string())?;
    let test = build_retrieval_examples(&held_out, RetrievalVariant::Context, 1, 11)
        .map_err(|e| e.to_string())?;
    let acc = accuracy(&model, &test).map_err(|e| e.to_string())?;
    for ex in &test {
        let p = dr_score(&ex.x, &ex.r, &model).map_err(|e| e.to_string())?;
        if !(p > 0.0 && p < 1.0) {
            return Err(format!("score {p} outside (0, 1)"));
        }
    }
    if acc > 0.9 {
        Ok(format!(
            "held-out accuracy {acc:.3} on {} pairs",
            test.len()
        ))
    } else {
        Err(format!("held-out accuracy {acc:.3} not above 0.9"))
    }
}

fn criterion_5d(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let corpus = keyword_corpus(rng, 200);
    let vocab: Vec<String> = {
        let mut v: Vec<String> = corpus
            .dialog_turns()
            .flat_map(|t| t.iter().cloned())
            .collect();
        v.sort();
        v.dedup();
        v
    };
    let lm = fine_tune_mlm(
        CountingLm::with_vocab_from(corpus.dialog_turns()),
        &corpus,
        1,
    )
    .map_err(|e| e.to_string())?;
    let mut increased = 0;
    const TRIALS: usize = 200;
    for trial in 0..TRIALS {
        let mut trng = ChaCha8Rng::seed_from_u64(trial as u64);
        let d = &corpus.dialogs[trng.random_range(0..corpus.dialogs.len())];
        let context = DialogContext::new(vec![d.turns[0].clone()]).map_err(|e| e.to_string())?;
        let r: Vec<String> = d.turns[1].to_vec();
        let mut longer = r.clone();
        longer.extend((0..3).map(|_| vocab[trng.random_range(0..vocab.len())].clone()));
        let before = mlm_score(&context, &r, &lm)
            .map_err(|e| e.to_string())?
            .total_nll();
        let after = mlm_score(&context, &longer, &lm)
            .map_err(|e| e.to_string())?
            .total_nll();
        if after > before {
            increased += 1;
        }
    }
    let share = increased as f64 / TRIALS as f64;
    if share >= 0.95 {
        Ok(format!("total_nll grew in {increased}/{TRIALS} trials"))
    } else {
        Err(format!(
            "total_nll grew in only {increased}/{TRIALS} trials"
        ))
    }
}

fn criterion_5() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut parts = Vec::new();
    let mut ok = true;
    type Part = fn(&mut ChaCha8Rng) -> Result<String, String>;
    let checks: [(&str, Part); 4] = [
        ("a", criterion_5a),
        ("b", criterion_5b),
        ("c", criterion_5c),
        ("d", criterion_5d),
    ];
    for (name, check) in checks {
        match check(&mut rng) {
            Ok(d) => parts.push(format!("({name}) {d}")),
            Err(e) => {
                ok = false;
                parts.push(format!("({name}) FAILED {e}"));
            }
        }
    }
    let detail = parts.join("; ");
    within_time(
        if ok { Pass(detail) } else { Fail(detail) },
        t,
        Duration::from_secs(120),
    )
}

/// Average ranks by counting smaller and equal values.
fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(3..=8);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(1..=4) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(1..=4) as f64).collect();
        match (
            spearman(&x, &y),
            oracle_pearson(&oracle_ranks(&x), &oracle_ranks(&y)),
        ) {
            (Ok(got), Some(want)) => {
                worst = worst.max((got.coefficient - want).abs());
                compared += 1;
            }
            (Err(_), None) => {}
            (got, want) => {
                return Fail(format!(
                    "x {x:?} y {y:?}: spearman {got:?}, oracle {want:?}"
                ))
            }
        }
    }
    if worst > ORACLE_TOL {
        return Fail(format!(
            "max |Δ| {worst:.1e} over {compared} defined cases exceeds {ORACLE_TOL:e}"
        ));
    }
    let mut worst_mono = 0.0f64;
    for _ in 0..1_000 {
        let n = rng.random_range(3..=40);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let a = rng.random_range(0.1..2.0);
        let b = rng.random_range(-3.0..3.0);
        let fx: Vec<f64> = x.iter().map(|v| (a * v).exp() + b).collect();
        let gy: Vec<f64> = y.iter().map(|v| v * v * v + a * v).collect();
        match (spearman(&x, &y), spearman(&fx, &gy)) {
            (Ok(p), Ok(q)) => worst_mono = worst_mono.max((p.coefficient - q.coefficient).abs()),
            (p, q) => return Fail(format!("monotone case undefined: {p:?} / {q:?}")),
        }
    }
    let detail = format!(
        "oracle max |Δ| {worst:.1e} over {compared} defined of 10000 cases; monotone max |Δ| {worst_mono:.1e} over 1000"
    );
    if worst_mono <= INVARIANCE_TOL {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn criterion_7() -> Verdict {
    let t = Instant::now();
    let v = (|| -> Result<String, String> {
        let ds = usr_eval::synthetic::three_systems(60, 7);
        let corpus = corpus_from_dataset(&ds);
        let e = |e: usr_core::Error| e.to_string();
        let scorers = Scorers {
            mlm: Some(Box::new(
                fine_tune_mlm(
                    CountingLm::with_vocab_from(corpus.dialog_turns()),
                    &corpus,
                    1,
                )
                .map_err(e)?,
            )),
            dr_context: Some(Box::new(
                train_dr(
                    BowLogistic::new(7),
                    &corpus,
                    RetrievalVariant::Context,
                    1,
                    7,
                )
                .map_err(e)?,
            )),
            dr_fact: Some(Box::new(
                train_dr(BowLogistic::new(7), &corpus, RetrievalVariant::Fact, 1, 7).map_err(e)?,
            )),
            ..Scorers::default()
        };
        let pool = thread_pool(0).map_err(|e| e.to_string())?;
        let examples: Vec<_> = ds.examples().iter().collect();
        let mut scores = Vec::new();
        for m in [
            Metric::Mlm,
            Metric::Dr(RetrievalVariant::Context),
            Metric::Dr(RetrievalVariant::Fact),
        ] {
            scores.extend(
                scorers
                    .score_all(&pool, m, &examples)
                    .map_err(|e| e.to_string())?,
            );
        }
        let model = fit_human(&ds).map_err(e)?;
        let file = ModelFile {
            model,
            profile: model.weight_profile(),
            mode: FitMode::Human,
            mapping: SubMetricMapping::topical_chat(),
            annotator: None,
            rows: ds.examples().len(),
            fit_spearman: None,
            dataset_fingerprint: usr_eval::fingerprint::dataset(&ds),
            config_hash: String::new(),
            seed: 7,
        };
        let ids: Vec<&str> = ds
            .examples()
            .iter()
            .map(|e| e.example_id.as_str())
            .collect();
        let usr = usr_batch(&file, &file.mapping, Default::default(), &ids, &scores)
            .map_err(|e| e.to_string())?;
        let table = ScoreTable::from_dataset(&ds, &usr, TableOptions::default()).map_err(e)?;
        let report = system_level(&table, "usr", Quality::Overall).map_err(e)?;
        let systems = ds
            .systems()
            .into_iter()
            .filter(|s| *s != GROUND_TRUTH_SYSTEM)
            .count();
        if report.spearman == 1.0 {
            Ok(format!(
                "system-level spearman {} over {systems} systems, n {}",
                report.spearman, report.n
            ))
        } else {
            Err(format!(
                "system-level spearman {} (expected exactly 1.0)",
                report.spearman
            ))
        }
    })();
    let v = match v {
        Ok(d) => Pass(d),
        Err(d) => Fail(d),
    };
    within_time(v, t, Duration::from_secs(30))
}

fn random_model(rng: &mut ChaCha8Rng) -> RegressionModel {
    let mut r = || rng.random_range(-2.0..2.0);
    let weights = [r(), r(), r(), r(), r()];
    let intercept = r();
    let mean = [r(), r(), r(), r(), r()];
    let mut model = RegressionModel {
        weights,
        intercept,
        normalizer: usr_core::regression::Normalizer {
            mean,
            std: [1.0; 5],
        },
    };
    for s in model.normalizer.std.iter_mut() {
        *s = rng.random_range(0.2..3.0);
    }
    model
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_fit = 0.0f64;
    let mut worst_sum = 0.0f64;
    let mut worst_shift = 0.0f64;
    let mut worst_affine = 0.0f64;
    for _ in 0..200 {
        let truth = random_model(&mut rng);
        let rows: Vec<(QualityVector, f64)> = (0..rng.random_range(6..60))
            .map(|_| {
                let qv = QualityVector([0; 5].map(|_| rng.random_range(0.0..5.0)));
                (qv, truth.predict(&qv))
            })
            .collect();
        let fitted = match fit_regression(&rows) {
            Ok(m) => m,
            Err(e) => return Fail(format!("fit failed on noiseless rows: {e}")),
        };
        for (qv, y) in &rows {
            worst_fit = worst_fit.max((fitted.predict(qv) - y).abs() / y.abs().max(1.0));
        }

        let profile = truth.weight_profile();
        worst_sum = worst_sum.max((profile.iter().sum::<f64>() - 1.0).abs());
        let c = rng.random_range(-20.0..20.0);
        let shifted = RegressionModel {
            weights: truth.weights.map(|w| w + c),
            ..truth
        };
        for (p, q) in profile.iter().zip(shifted.weight_profile()) {
            worst_shift = worst_shift.max((p - q).abs());
        }

        let batch: Vec<(String, QualityVector)> = (0..20)
            .map(|i| {
                (
                    format!("e{i}"),
                    QualityVector([0; 5].map(|_| rng.random_range(-3.0..3.0))),
                )
            })
            .collect();
        let k = rng.random_range(0..5);
        let (a, b) = (rng.random_range(0.05..20.0), rng.random_range(-10.0..10.0));
        let rescaled: Vec<(String, QualityVector)> = batch
            .iter()
            .map(|(id, qv)| {
                let mut v = *qv;
                v.0[k] = a * v.0[k] + b;
                (id.clone(), v)
            })
            .collect();
        let (Ok(before), Ok(after)) = (
            usr_scores(&truth, &batch, NormStats::Batch),
            usr_scores(&truth, &rescaled, NormStats::Batch),
        ) else {
            return Fail("batch normalization failed".into());
        };
        for (p, q) in before.iter().zip(&after) {
            worst_affine = worst_affine.max((p.value.unwrap() - q.value.unwrap()).abs());
        }
    }
    let detail = format!(
        "recovery {worst_fit:.1e} (tol {RECOVERY_TOL:e}); profile sum {worst_sum:.1e}, shift {worst_shift:.1e}, \
         affine rescaling {worst_affine:.1e} (tol {INVARIANCE_TOL:e})"
    );
    if worst_fit <= RECOVERY_TOL
        && worst_sum <= INVARIANCE_TOL
        && worst_shift <= INVARIANCE_TOL
        && worst_affine <= INVARIANCE_TOL
    {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("regression completeness", criterion_1),
        ("inter-annotator agreement", criterion_2),
        ("word-overlap turn-level correlations", criterion_3),
        ("F-1 adversarial response", criterion_4),
        ("toy-backend sub-metric properties", criterion_5),
        ("spearman oracle equivalence", criterion_6),
        ("end-to-end system-level USR", criterion_7),
        ("regression invariants", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("criterion {} {name}: {tag} ({detail})", i + 1);
    }
    println!("{} of {} criteria failed", failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
