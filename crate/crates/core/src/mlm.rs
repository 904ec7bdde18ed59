//! Masked-language-model sub-metric.
//!
//! The context and response are concatenated; each response token in turn is
//! replaced by [`MASK_TOKEN`] and the backend reports the log-likelihood of
//! the true token at that position. The metric is the negated sum of those
//! log-likelihoods. Context tokens are never masked.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{DialogContext, DialogCorpus};
use crate::{Error, Result, TokenSequence};

pub const MASK_TOKEN: &str = "<mask>";
pub const UNK_TOKEN: &str = "<unk>";

/// Epochs used when fine-tuning on the evaluation corpus unless overridden.
pub const DEFAULT_MLM_EPOCHS: u32 = 1;

pub const METRIC_NAME: &str = "usr-mlm";

/// A model that scores a masked position given everything around it.
///
/// Implementations operating on subword units must report one aggregated
/// log-likelihood per word token.
pub trait MaskedLmBackend {
    fn id(&self) -> &str;

    /// Natural-log likelihood of `target` at `position`, where
    /// `masked[position] == MASK_TOKEN` and every other token is visible.
    /// Must be `<= 0`.
    fn masked_log_likelihood(
        &self,
        masked: &[String],
        position: usize,
        target: &str,
    ) -> Result<f64>;

    /// Longest input the backend accepts, in tokens.
    fn max_len(&self) -> Option<usize> {
        None
    }

    fn fine_tune(&mut self, _corpus: &[TokenSequence], _epochs: u32) -> Result<()> {
        Err(Error::Unsupported(self.id().to_string()))
    }
}

impl<B: MaskedLmBackend + ?Sized> MaskedLmBackend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn masked_log_likelihood(
        &self,
        masked: &[String],
        position: usize,
        target: &str,
    ) -> Result<f64> {
        (**self).masked_log_likelihood(masked, position, target)
    }

    fn max_len(&self) -> Option<usize> {
        (**self).max_len()
    }
}

impl<B: MaskedLmBackend + ?Sized> MaskedLmBackend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn masked_log_likelihood(
        &self,
        masked: &[String],
        position: usize,
        target: &str,
    ) -> Result<f64> {
        (**self).masked_log_likelihood(masked, position, target)
    }

    fn max_len(&self) -> Option<usize> {
        (**self).max_len()
    }

    fn fine_tune(&mut self, corpus: &[TokenSequence], epochs: u32) -> Result<()> {
        (**self).fine_tune(corpus, epochs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmTokenScore {
    pub position: usize,
    pub token: String,
    pub log_likelihood: f64,
}

/// Per-token log-likelihoods of a response and their totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmScore {
    per_token: Vec<MlmTokenScore>,
    total_nll: f64,
    length_normalized_nll: f64,
}

impl MlmScore {
    pub fn from_token_scores(per_token: Vec<MlmTokenScore>) -> Result<Self> {
        if per_token.is_empty() {
            return Err(Error::Precondition(
                "MLM score needs at least one token".into(),
            ));
        }
        if per_token.windows(2).any(|w| w[1].position <= w[0].position) {
            return Err(Error::Argument(
                "token positions must be strictly increasing".into(),
            ));
        }
        if let Some(bad) = per_token
            .iter()
            .find(|t| t.log_likelihood.is_nan() || t.log_likelihood > 0.0)
        {
            return Err(Error::BackendContract(format!(
                "log-likelihood {} for `{}` is not <= 0",
                bad.log_likelihood, bad.token
            )));
        }
        let total_nll = -per_token.iter().map(|t| t.log_likelihood).sum::<f64>();
        let length_normalized_nll = total_nll / per_token.len() as f64;
        Ok(Self {
            per_token,
            total_nll,
            length_normalized_nll,
        })
    }

    pub fn per_token(&self) -> &[MlmTokenScore] {
        &self.per_token
    }

    pub fn total_nll(&self) -> f64 {
        self.total_nll
    }

    pub fn length_normalized_nll(&self) -> f64 {
        self.length_normalized_nll
    }
}

/// Sign convention for reporting the MLM metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MlmOrientation {
    /// Negated NLL: larger means more natural.
    #[default]
    HigherIsBetter,
    /// NLL as is.
    RawNll,
}

pub fn mlm_score<B: MaskedLmBackend + ?Sized>(
    context: &DialogContext,
    response: &[String],
    backend: &B,
) -> Result<MlmScore> {
    if response.is_empty() {
        return Err(Error::Precondition("response must be non-empty".into()));
    }
    let mut context_tokens: Vec<String> = context.flatten().into_tokens();
    if let Some(limit) = backend.max_len() {
        if response.len() > limit {
            return Err(Error::Precondition(format!(
                "response of {} tokens exceeds backend limit {limit}",
                response.len()
            )));
        }
        // Drop the oldest context first; the response is never truncated.
        let budget = limit - response.len();
        if context_tokens.len() > budget {
            context_tokens.drain(..context_tokens.len() - budget);
        }
    }

    let offset = context_tokens.len();
    let mut seq = context_tokens;
    seq.extend(response.iter().cloned());

    let mut per_token = Vec::with_capacity(response.len());
    for (i, word) in response.iter().enumerate() {
        let pos = offset + i;
        let original = core::mem::replace(&mut seq[pos], MASK_TOKEN.to_string());
        let ll = backend.masked_log_likelihood(&seq, pos, word);
        seq[pos] = original;
        let ll = ll?;
        if ll.is_nan() || ll > 0.0 {
            return Err(Error::BackendContract(format!(
                "backend `{}` returned log-likelihood {ll} for `{word}`",
                backend.id()
            )));
        }
        per_token.push(MlmTokenScore {
            position: i,
            token: word.clone(),
            log_likelihood: ll,
        });
    }
    MlmScore::from_token_scores(per_token)
}

pub fn mlm_metric_value(score: &MlmScore, orientation: MlmOrientation, normalize: bool) -> f64 {
    let nll = if normalize {
        score.length_normalized_nll
    } else {
        score.total_nll
    };
    match orientation {
        MlmOrientation::RawNll => nll,
        MlmOrientation::HigherIsBetter => -nll,
    }
}

/// Fine-tunes `backend` on the dialog turns of `corpus`. Facts and personas
/// are never passed to the backend.
pub fn fine_tune_mlm<B: MaskedLmBackend>(
    mut backend: B,
    corpus: &DialogCorpus,
    epochs: u32,
) -> Result<B> {
    if epochs == 0 {
        return Err(Error::Argument("epochs must be at least 1".into()));
    }
    let turns: Vec<TokenSequence> = corpus
        .dialog_turns()
        .filter(|t| !t.is_empty())
        .cloned()
        .collect();
    if turns.is_empty() {
        return Err(Error::Precondition(
            "fine-tuning corpus has no dialog turns".into(),
        ));
    }
    backend.fine_tune(&turns, epochs)?;
    Ok(backend)
}

/// Assigns probability `1 / vocab_size` to every token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformLm {
    pub vocab_size: usize,
}

impl UniformLm {
    pub const ID: &'static str = "toy-uniform";

    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Argument("vocabulary size must be positive".into()));
        }
        Ok(Self { vocab_size })
    }
}

impl MaskedLmBackend for UniformLm {
    fn id(&self) -> &str {
        Self::ID
    }

    fn masked_log_likelihood(
        &self,
        _masked: &[String],
        _position: usize,
        _target: &str,
    ) -> Result<f64> {
        Ok(-libm::log(self.vocab_size as f64))
    }
}

/// Bidirectional bigram model over a fixed vocabulary.
///
/// The masked token is scored as `P(w | left) * P(right | w)` normalized over
/// the vocabulary, with add-`k` smoothed bigram estimates. Sequence edges
/// act as a boundary symbol. Out-of-vocabulary words map to [`UNK_TOKEN`].
/// With no training counts every word has probability `1 / |V|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "CountingLmRepr", into = "CountingLmRepr")]
pub struct CountingLm {
    vocab: Vec<String>,
    index: BTreeMap<String, u32>,
    bigrams: BTreeMap<(u32, u32), f64>,
    row_totals: Vec<f64>,
    smoothing: f64,
    epochs_trained: u32,
}

#[derive(Serialize, Deserialize)]
struct CountingLmRepr {
    vocab: Vec<String>,
    bigrams: Vec<(u32, u32, f64)>,
    smoothing: f64,
    epochs_trained: u32,
}

impl From<CountingLmRepr> for CountingLm {
    fn from(r: CountingLmRepr) -> Self {
        let mut lm = CountingLm::with_smoothing(r.vocab, r.smoothing);
        for (a, b, c) in r.bigrams {
            lm.add(a, b, c);
        }
        lm.epochs_trained = r.epochs_trained;
        lm
    }
}

impl From<CountingLm> for CountingLmRepr {
    fn from(lm: CountingLm) -> Self {
        Self {
            bigrams: lm.bigrams.iter().map(|(&(a, b), &c)| (a, b, c)).collect(),
            vocab: lm.vocab,
            smoothing: lm.smoothing,
            epochs_trained: lm.epochs_trained,
        }
    }
}

impl CountingLm {
    pub const ID: &'static str = "toy-counting";
    pub const DEFAULT_SMOOTHING: f64 = 0.5;

    /// Untrained model over `vocab` (plus [`UNK_TOKEN`]).
    pub fn new(vocab: impl IntoIterator<Item = String>) -> Self {
        Self::with_smoothing(vocab, Self::DEFAULT_SMOOTHING)
    }

    pub fn with_smoothing(vocab: impl IntoIterator<Item = String>, smoothing: f64) -> Self {
        let mut words: Vec<String> = vocab.into_iter().filter(|w| w != MASK_TOKEN).collect();
        words.push(UNK_TOKEN.to_string());
        words.sort();
        words.dedup();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let row_totals = alloc::vec![0.0; words.len() + 1];
        Self {
            vocab: words,
            index,
            bigrams: BTreeMap::new(),
            row_totals,
            smoothing: smoothing.max(f64::MIN_POSITIVE),
            epochs_trained: 0,
        }
    }

    /// Untrained model whose vocabulary is every token in `corpus`.
    pub fn with_vocab_from<'a>(corpus: impl IntoIterator<Item = &'a TokenSequence>) -> Self {
        let mut vocab = alloc::collections::BTreeSet::new();
        for seq in corpus {
            vocab.extend(seq.iter().cloned());
        }
        Self::new(vocab)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn epochs_trained(&self) -> u32 {
        self.epochs_trained
    }

    fn boundary(&self) -> u32 {
        self.vocab.len() as u32
    }

    fn id_of(&self, word: &str) -> u32 {
        self.index
            .get(word)
            .or_else(|| self.index.get(UNK_TOKEN))
            .copied()
            .expect("unk is always in vocabulary")
    }

    fn add(&mut self, from: u32, to: u32, count: f64) {
        *self.bigrams.entry((from, to)).or_insert(0.0) += count;
        self.row_totals[from as usize] += count;
    }

    fn count(&self, from: u32, to: u32) -> f64 {
        self.bigrams.get(&(from, to)).copied().unwrap_or(0.0)
    }

    /// Smoothed `P(to | from)`; `to` ranges over the vocabulary plus the
    /// boundary when `with_boundary` is set.
    fn transition(&self, from: u32, to: u32, with_boundary: bool) -> f64 {
        let outcomes = self.vocab.len() as f64 + if with_boundary { 1.0 } else { 0.0 };
        (self.count(from, to) + self.smoothing)
            / (self.row_totals[from as usize] + self.smoothing * outcomes)
    }

    fn neighbour(&self, masked: &[String], idx: Option<usize>) -> u32 {
        match idx.and_then(|i| masked.get(i)) {
            Some(w) => self.id_of(w),
            None => self.boundary(),
        }
    }
}

impl MaskedLmBackend for CountingLm {
    fn id(&self) -> &str {
        Self::ID
    }

    fn masked_log_likelihood(
        &self,
        masked: &[String],
        position: usize,
        target: &str,
    ) -> Result<f64> {
        if masked.get(position).map(String::as_str) != Some(MASK_TOKEN) {
            return Err(Error::Argument(format!(
                "position {position} is not masked"
            )));
        }
        let left = self.neighbour(masked, position.checked_sub(1));
        let right = self.neighbour(masked, Some(position + 1));
        let weight = |w: u32| self.transition(left, w, false) * self.transition(w, right, true);
        let total: f64 = (0..self.vocab.len() as u32).map(weight).sum();
        let p = weight(self.id_of(target)) / total;
        Ok(libm::log(p).min(0.0))
    }

    fn fine_tune(&mut self, corpus: &[TokenSequence], epochs: u32) -> Result<()> {
        for _ in 0..epochs {
            for seq in corpus {
                let ids: Vec<u32> = seq.iter().map(|w| self.id_of(w)).collect();
                let b = self.boundary();
                let mut prev = b;
                for &id in ids.iter().chain(core::iter::once(&b)) {
                    self.add(prev, id, 1.0);
                    prev = id;
                }
            }
            self.epochs_trained += 1;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialog, Fact};
    use alloc::vec;
    use core::cell::RefCell;

    fn t(s: &str) -> TokenSequence {
        TokenSequence::from(s)
    }

    fn ctx(s: &str) -> DialogContext {
        DialogContext::new(vec![t(s)]).unwrap()
    }

    #[test]
    fn uniform_backend_is_analytic() {
        let lm = UniformLm::new(50).unwrap();
        let s = mlm_score(&ctx("hello there"), &t("how are you ?"), &lm).unwrap();
        let expected = 4.0 * libm::log(50.0);
        assert!((s.total_nll() - expected).abs() < 1e-12);
        assert!((s.length_normalized_nll() - libm::log(50.0)).abs() < 1e-12);
        assert_eq!(s.per_token().len(), 4);
    }

    #[test]
    fn single_token_response() {
        let lm = UniformLm::new(7).unwrap();
        let s = mlm_score(&ctx("hi"), &t("yo"), &lm).unwrap();
        assert_eq!(s.total_nll(), -s.per_token()[0].log_likelihood);
        assert_eq!(s.total_nll(), s.length_normalized_nll());
    }

    #[test]
    fn empty_response_rejected() {
        let lm = UniformLm::new(7).unwrap();
        assert!(matches!(
            mlm_score(&ctx("hi"), &t(""), &lm),
            Err(Error::Precondition(_))
        ));
    }

    struct Positive;

    impl MaskedLmBackend for Positive {
        fn id(&self) -> &str {
            "positive"
        }
        fn masked_log_likelihood(&self, _: &[String], _: usize, _: &str) -> Result<f64> {
            Ok(0.1)
        }
    }

    #[test]
    fn positive_log_likelihood_is_contract_violation() {
        assert!(matches!(
            mlm_score(&ctx("hi"), &t("yo"), &Positive),
            Err(Error::BackendContract(_))
        ));
    }

    /// Records the inputs of every call.
    struct Recorder {
        calls: RefCell<Vec<(Vec<String>, usize)>>,
        limit: Option<usize>,
    }

    impl MaskedLmBackend for Recorder {
        fn id(&self) -> &str {
            "recorder"
        }
        fn masked_log_likelihood(
            &self,
            masked: &[String],
            position: usize,
            _: &str,
        ) -> Result<f64> {
            self.calls.borrow_mut().push((masked.to_vec(), position));
            Ok(-1.0)
        }
        fn max_len(&self) -> Option<usize> {
            self.limit
        }
    }

    #[test]
    fn truncates_oldest_context_first() {
        let rec = Recorder {
            calls: RefCell::new(Vec::new()),
            limit: Some(5),
        };
        let context = DialogContext::new(vec![t("a b c"), t("d e")]).unwrap();
        mlm_score(&context, &t("x y"), &rec).unwrap();
        let calls = rec.calls.borrow();
        assert_eq!(calls.len(), 2);
        assert_eq!(calls[0].0, vec!["c", "d", "e", MASK_TOKEN, "y"]);
        assert_eq!(calls[1].0, vec!["c", "d", "e", "x", MASK_TOKEN]);
        let too_long = Recorder {
            calls: RefCell::new(Vec::new()),
            limit: Some(1),
        };
        assert!(mlm_score(&context, &t("x y"), &too_long).is_err());
    }

    #[test]
    fn metric_orientation() {
        let toks = (0..4)
            .map(|i| MlmTokenScore {
                position: i,
                token: "w".into(),
                log_likelihood: -3.0,
            })
            .collect();
        let s = MlmScore::from_token_scores(toks).unwrap();
        assert_eq!(mlm_metric_value(&s, MlmOrientation::RawNll, false), 12.0);
        assert_eq!(
            mlm_metric_value(&s, MlmOrientation::HigherIsBetter, false),
            -12.0
        );
        assert_eq!(mlm_metric_value(&s, MlmOrientation::RawNll, true), 3.0);
        assert_eq!(
            mlm_metric_value(&s, MlmOrientation::HigherIsBetter, true),
            -3.0
        );
    }

    fn corpus() -> DialogCorpus {
        DialogCorpus::new(vec![Dialog {
            dialog_id: "d".into(),
            turns: vec![t("the cat sat"), t("the dog ran"), t("a cat ran")],
            fact: Fact(t("zebras are striped")),
        }])
    }

    #[test]
    fn uniform_cannot_fine_tune() {
        let lm = UniformLm::new(3).unwrap();
        assert_eq!(
            fine_tune_mlm(lm, &corpus(), 1).unwrap_err(),
            Error::Unsupported("toy-uniform".into())
        );
    }

    #[test]
    fn counting_lm_untrained_is_uniform() {
        let lm = CountingLm::with_vocab_from(corpus().dialog_turns());
        let v = lm.vocab_size() as f64;
        let s = mlm_score(&ctx("the"), &t("cat sat"), &lm).unwrap();
        assert!((s.length_normalized_nll() - libm::log(v)).abs() < 1e-12);
    }

    #[test]
    fn fine_tuning_raises_seen_bigram_likelihood() {
        let before = CountingLm::with_vocab_from(corpus().dialog_turns());
        let after = fine_tune_mlm(before.clone(), &corpus(), DEFAULT_MLM_EPOCHS).unwrap();
        assert_eq!(after.epochs_trained(), 1);
        for (c, r) in [("the", "cat sat"), ("the", "dog ran"), ("a", "cat ran")] {
            let b = mlm_score(&ctx(c), &t(r), &before).unwrap().total_nll();
            let a = mlm_score(&ctx(c), &t(r), &after).unwrap().total_nll();
            assert!(a < b, "{c} {r}: {a} !< {b}");
        }
    }

    #[test]
    fn fine_tuning_sees_no_fact_tokens() {
        struct Spy(Vec<TokenSequence>);
        impl MaskedLmBackend for Spy {
            fn id(&self) -> &str {
                "spy"
            }
            fn masked_log_likelihood(&self, _: &[String], _: usize, _: &str) -> Result<f64> {
                Ok(-1.0)
            }
            fn fine_tune(&mut self, corpus: &[TokenSequence], _: u32) -> Result<()> {
                self.0.extend_from_slice(corpus);
                Ok(())
            }
        }
        let spy = fine_tune_mlm(Spy(Vec::new()), &corpus(), 1).unwrap();
        assert_eq!(spy.0.len(), 3);
        assert!(spy
            .0
            .iter()
            .flat_map(|s| s.iter())
            .all(|w| w != "zebras" && w != "striped"));
    }

    #[test]
    fn counting_lm_checks_mask() {
        let lm = CountingLm::new(vec!["a".to_string()]);
        let seq = vec!["a".to_string()];
        assert!(lm.masked_log_likelihood(&seq, 0, "a").is_err());
    }
}
