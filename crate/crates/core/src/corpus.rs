//! Dialog data model: examples, human quality annotations, raw dialog corpora
//! and the construction of retrieval training pairs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, TokenSequence, GROUND_TRUTH_SYSTEM};

/// The six rated qualities. The first five are the specific qualities that
/// feed the regression; `Overall` is its target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quality {
    Understandable,
    Natural,
    MaintainsContext,
    Interesting,
    UsesKnowledge,
    Overall,
}

impl Quality {
    pub const ALL: [Quality; 6] = [
        Quality::Understandable,
        Quality::Natural,
        Quality::MaintainsContext,
        Quality::Interesting,
        Quality::UsesKnowledge,
        Quality::Overall,
    ];

    /// The five specific qualities, in regression input order.
    pub const SPECIFIC: [Quality; 5] = [
        Quality::Understandable,
        Quality::Natural,
        Quality::MaintainsContext,
        Quality::Interesting,
        Quality::UsesKnowledge,
    ];

    /// Machine name, also the canonical JSONL field name.
    pub fn key(self) -> &'static str {
        match self {
            Quality::Understandable => "understandable",
            Quality::Natural => "natural",
            Quality::MaintainsContext => "maintains_context",
            Quality::Interesting => "interesting",
            Quality::UsesKnowledge => "uses_knowledge",
            Quality::Overall => "overall",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Quality::Understandable => "Understandable",
            Quality::Natural => "Natural",
            Quality::MaintainsContext => "Maintains Context",
            Quality::Interesting => "Interesting",
            Quality::UsesKnowledge => "Uses Knowledge",
            Quality::Overall => "Overall Quality",
        }
    }

    /// Closed rating range.
    pub fn range(self) -> (u8, u8) {
        match self {
            Quality::Understandable | Quality::UsesKnowledge => (0, 1),
            Quality::Natural | Quality::MaintainsContext | Quality::Interesting => (1, 3),
            Quality::Overall => (1, 5),
        }
    }

    /// Accepts the machine key, the label, or common aliases
    /// (`engaging`, `overall-quality`), ignoring case, spaces, `-` and `_`.
    pub fn parse(name: &str) -> Option<Quality> {
        let squashed: String = name
            .chars()
            .filter(|c| !matches!(c, ' ' | '-' | '_'))
            .flat_map(char::to_lowercase)
            .collect();
        Some(match squashed.as_str() {
            "understandable" | "und" => Quality::Understandable,
            "natural" | "nat" => Quality::Natural,
            "maintainscontext" | "mctx" | "context" => Quality::MaintainsContext,
            "interesting" | "engaging" | "int" => Quality::Interesting,
            "usesknowledge" | "uk" | "knowledge" => Quality::UsesKnowledge,
            "overall" | "overallquality" | "oq" => Quality::Overall,
            _ => return None,
        })
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Dialog history, oldest turn first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogContext {
    turns: Vec<TokenSequence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speaker_tags: Option<Vec<String>>,
}

impl DialogContext {
    pub fn new(turns: Vec<TokenSequence>) -> Result<Self> {
        if turns.is_empty() {
            return Err(Error::Precondition(
                "dialog context needs at least one turn".into(),
            ));
        }
        Ok(Self {
            turns,
            speaker_tags: None,
        })
    }

    pub fn with_speakers(turns: Vec<TokenSequence>, speakers: Vec<String>) -> Result<Self> {
        if speakers.len() != turns.len() {
            return Err(Error::Argument(format!(
                "{} speaker tags for {} turns",
                speakers.len(),
                turns.len()
            )));
        }
        let mut ctx = Self::new(turns)?;
        ctx.speaker_tags = Some(speakers);
        Ok(ctx)
    }

    pub fn turns(&self) -> &[TokenSequence] {
        &self.turns
    }

    pub fn speaker_tags(&self) -> Option<&[String]> {
        self.speaker_tags.as_deref()
    }

    /// All turns flattened into one sequence.
    pub fn flatten(&self) -> TokenSequence {
        TokenSequence::concat(&self.turns)
    }
}

/// Grounding knowledge for a response: a Topical-Chat fact or a PersonaChat
/// persona (all persona lines concatenated). Empty when the corpus has none.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fact(pub TokenSequence);

impl Fact {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &TokenSequence {
        &self.0
    }
}

/// One response to be evaluated, with everything any metric may need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogExample {
    pub example_id: String,
    pub context: DialogContext,
    pub fact: Fact,
    pub response: TokenSequence,
    pub reference: Option<TokenSequence>,
    pub system_id: String,
}

impl DialogExample {
    pub fn is_ground_truth(&self) -> bool {
        self.system_id == GROUND_TRUTH_SYSTEM
    }

    /// Retrieval input `x` for this example's context under `variant`.
    pub fn retrieval_input(&self, variant: RetrievalVariant) -> Result<TokenSequence> {
        retrieval_input(self.context.turns(), &self.fact, variant)
    }
}

/// One annotator's ratings of one response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityAnnotation {
    pub example_id: String,
    pub annotator_id: String,
    pub understandable: u8,
    pub natural: u8,
    pub maintains_context: u8,
    pub interesting: u8,
    pub uses_knowledge: u8,
    pub overall: u8,
}

impl QualityAnnotation {
    pub fn rating(&self, quality: Quality) -> u8 {
        match quality {
            Quality::Understandable => self.understandable,
            Quality::Natural => self.natural,
            Quality::MaintainsContext => self.maintains_context,
            Quality::Interesting => self.interesting,
            Quality::UsesKnowledge => self.uses_knowledge,
            Quality::Overall => self.overall,
        }
    }

    /// Builds an annotation from signed ratings given in [`Quality::ALL`]
    /// order, rejecting any value outside its range.
    pub fn from_ratings(
        example_id: impl Into<String>,
        annotator_id: impl Into<String>,
        ratings: [i64; 6],
    ) -> Result<Self> {
        let mut checked = [0u8; 6];
        for (slot, (q, v)) in checked.iter_mut().zip(Quality::ALL.iter().zip(ratings)) {
            let (lo, hi) = q.range();
            if v < i64::from(lo) || v > i64::from(hi) {
                return Err(Error::Range {
                    field: q.key().to_string(),
                    value: v,
                    min: lo.into(),
                    max: hi.into(),
                });
            }
            *slot = v as u8;
        }
        Ok(Self {
            example_id: example_id.into(),
            annotator_id: annotator_id.into(),
            understandable: checked[0],
            natural: checked[1],
            maintains_context: checked[2],
            interesting: checked[3],
            uses_knowledge: checked[4],
            overall: checked[5],
        })
    }

    pub fn validate(&self) -> Result<()> {
        for q in Quality::ALL {
            let (lo, hi) = q.range();
            let v = self.rating(q);
            if v < lo || v > hi {
                return Err(Error::Range {
                    field: q.key().to_string(),
                    value: v.into(),
                    min: lo.into(),
                    max: hi.into(),
                });
            }
        }
        Ok(())
    }
}

/// Examples plus their human annotations, with referential integrity checked
/// at construction.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct AnnotatedDataset {
    examples: Vec<DialogExample>,
    annotations: Vec<QualityAnnotation>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl AnnotatedDataset {
    pub fn new(examples: Vec<DialogExample>, annotations: Vec<QualityAnnotation>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, ex) in examples.iter().enumerate() {
            if index.insert(ex.example_id.clone(), i).is_some() {
                return Err(Error::Integrity(format!(
                    "duplicate example_id `{}`",
                    ex.example_id
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for ann in &annotations {
            ann.validate()?;
            if !index.contains_key(&ann.example_id) {
                return Err(Error::Integrity(format!(
                    "annotation by `{}` refers to unknown example_id `{}`",
                    ann.annotator_id, ann.example_id
                )));
            }
            if !seen.insert((ann.example_id.as_str(), ann.annotator_id.as_str())) {
                return Err(Error::Integrity(format!(
                    "annotator `{}` rated example `{}` twice",
                    ann.annotator_id, ann.example_id
                )));
            }
        }
        Ok(Self {
            examples,
            annotations,
            index,
        })
    }

    pub fn examples(&self) -> &[DialogExample] {
        &self.examples
    }

    pub fn annotations(&self) -> &[QualityAnnotation] {
        &self.annotations
    }

    pub fn example(&self, example_id: &str) -> Option<&DialogExample> {
        self.index.get(example_id).map(|&i| &self.examples[i])
    }

    pub fn annotations_for<'a>(
        &'a self,
        example_id: &'a str,
    ) -> impl Iterator<Item = &'a QualityAnnotation> + 'a {
        self.annotations
            .iter()
            .filter(move |a| a.example_id == example_id)
    }

    /// Annotator ids in sorted order.
    pub fn annotators(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .annotations
            .iter()
            .map(|a| a.annotator_id.as_str())
            .collect();
        set.into_iter().collect()
    }

    /// Distinct system ids in sorted order.
    pub fn systems(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.examples.iter().map(|e| e.system_id.as_str()).collect();
        set.into_iter().collect()
    }

    /// Ratings grouped per example, in example order; examples without
    /// annotations are omitted.
    pub fn ratings_by_example(&self) -> BTreeMap<&str, Vec<&QualityAnnotation>> {
        let mut out: BTreeMap<&str, Vec<&QualityAnnotation>> = BTreeMap::new();
        for ann in &self.annotations {
            out.entry(ann.example_id.as_str()).or_default().push(ann);
        }
        out
    }

    /// Keeps only the examples accepted by `keep` (and their annotations).
    pub fn filter(&self, mut keep: impl FnMut(&DialogExample) -> bool) -> Self {
        let examples: Vec<DialogExample> =
            self.examples.iter().filter(|e| keep(e)).cloned().collect();
        let ids: BTreeSet<&str> = examples.iter().map(|e| e.example_id.as_str()).collect();
        let annotations = self
            .annotations
            .iter()
            .filter(|a| ids.contains(a.example_id.as_str()))
            .cloned()
            .collect();
        // Subsets of a valid dataset are valid.
        Self::new(examples, annotations).expect("filtered dataset stays consistent")
    }
}

/// A raw dialog used for training: turns in order and the grounding fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialog {
    pub dialog_id: String,
    pub turns: Vec<TokenSequence>,
    #[serde(default)]
    pub fact: Fact,
}

impl Dialog {
    /// (history, response) for every turn that has at least one turn before it.
    pub fn gold_pairs(&self) -> impl Iterator<Item = (&[TokenSequence], &TokenSequence)> + '_ {
        (1..self.turns.len()).map(move |t| (&self.turns[..t], &self.turns[t]))
    }
}

/// A collection of raw dialogs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogCorpus {
    pub dialogs: Vec<Dialog>,
}

impl DialogCorpus {
    pub fn new(dialogs: Vec<Dialog>) -> Self {
        Self { dialogs }
    }

    /// Turns every example into a dialog `context ++ [response]`.
    pub fn from_examples<'a>(examples: impl IntoIterator<Item = &'a DialogExample>) -> Self {
        let dialogs = examples
            .into_iter()
            .map(|ex| {
                let mut turns = ex.context.turns().to_vec();
                turns.push(ex.response.clone());
                Dialog {
                    dialog_id: ex.example_id.clone(),
                    turns,
                    fact: ex.fact.clone(),
                }
            })
            .collect();
        Self { dialogs }
    }

    pub fn is_empty(&self) -> bool {
        self.dialogs.iter().all(|d| d.turns.is_empty())
    }

    /// Dialog turns only; facts never appear in this stream.
    pub fn dialog_turns(&self) -> impl Iterator<Item = &TokenSequence> + '_ {
        self.dialogs.iter().flat_map(|d| d.turns.iter())
    }

    pub fn has_facts(&self) -> bool {
        !self.dialogs.is_empty() && self.dialogs.iter().all(|d| !d.fact.is_empty())
    }
}

/// What the retrieval model conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalVariant {
    /// Dialog history followed by the fact.
    Context,
    /// The fact alone.
    Fact,
}

impl RetrievalVariant {
    pub fn key(self) -> &'static str {
        match self {
            RetrievalVariant::Context => "context",
            RetrievalVariant::Fact => "fact",
        }
    }
}

/// Builds the retrieval input for a history and fact.
pub fn retrieval_input(
    history: &[TokenSequence],
    fact: &Fact,
    variant: RetrievalVariant,
) -> Result<TokenSequence> {
    match variant {
        RetrievalVariant::Context => Ok(TokenSequence::concat(
            history.iter().chain(core::iter::once(&fact.0)),
        )),
        RetrievalVariant::Fact => {
            if fact.is_empty() {
                Err(Error::UnavailableVariant("fact".into()))
            } else {
                Ok(fact.0.clone())
            }
        }
    }
}

/// One labelled retrieval pair: `label` is true when `r` is the response that
/// actually followed `x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalExample {
    pub x: TokenSequence,
    pub r: TokenSequence,
    pub label: bool,
}

/// Emits, for every gold (x, r) pair in `corpus`, one positive followed by
/// `negative_ratio` negatives whose responses are drawn uniformly without
/// replacement from the corpus' other distinct responses.
pub fn build_retrieval_examples(
    corpus: &DialogCorpus,
    variant: RetrievalVariant,
    negative_ratio: usize,
    seed: u64,
) -> Result<Vec<RetrievalExample>> {
    if negative_ratio == 0 {
        return Err(Error::Argument("negative_ratio must be positive".into()));
    }
    if variant == RetrievalVariant::Fact && !corpus.has_facts() {
        return Err(Error::UnavailableVariant("fact".into()));
    }

    // Distinct responses in first-seen order; pool index per gold pair.
    let mut pool: Vec<&TokenSequence> = Vec::new();
    let mut pool_index: BTreeMap<&TokenSequence, usize> = BTreeMap::new();
    let mut gold = Vec::new();
    for dialog in &corpus.dialogs {
        for (history, response) in dialog.gold_pairs() {
            if response.is_empty() {
                continue;
            }
            let idx = *pool_index.entry(response).or_insert_with(|| {
                pool.push(response);
                pool.len() - 1
            });
            gold.push((retrieval_input(history, &dialog.fact, variant)?, idx));
        }
    }
    if pool.len() < 2 {
        return Err(Error::Precondition(format!(
            "retrieval examples need at least 2 distinct responses, corpus has {}",
            pool.len()
        )));
    }
    if negative_ratio > pool.len() - 1 {
        return Err(Error::InsufficientData(format!(
            "negative_ratio {negative_ratio} exceeds the {} available negatives",
            pool.len() - 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(gold.len() * (negative_ratio + 1));
    for (x, gold_idx) in gold {
        out.push(RetrievalExample {
            x: x.clone(),
            r: pool[gold_idx].clone(),
            label: true,
        });
        // Sample from the pool with the gold entry removed.
        let picks = rand::seq::index::sample(&mut rng, pool.len() - 1, negative_ratio);
        for pick in picks.iter() {
            let idx = if pick >= gold_idx { pick + 1 } else { pick };
            out.push(RetrievalExample {
                x: x.clone(),
                r: pool[idx].clone(),
                label: false,
            });
        }
    }
    Ok(out)
}
