//! Referenced word-overlap metrics: F-1, sentence BLEU, METEOR and ROUGE-L.
//!
//! All functions take normalized token sequences and return a score in
//! `[0, 1]`. Metric names used in score files are listed in [`names`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

pub mod names {
    pub const F1: &str = "f1";
    pub const BLEU: [&str; 4] = ["bleu-1", "bleu-2", "bleu-3", "bleu-4"];
    pub const METEOR: &str = "meteor";
    pub const ROUGE_L: &str = "rouge-l";
}

/// Multiset of the n-grams of one order in a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramProfile<'a> {
    n: usize,
    counts: BTreeMap<&'a [String], usize>,
    total: usize,
}

impl<'a> NGramProfile<'a> {
    pub fn new(tokens: &'a [String], n: usize) -> Self {
        assert!(n >= 1, "n-gram order must be at least 1");
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
            total += 1;
        }
        Self { n, counts, total }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Number of n-grams, `max(0, len - n + 1)`.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn count(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [String], usize)> + '_ {
        self.counts.iter().map(|(g, c)| (*g, *c))
    }

    /// Size of the multiset intersection with `other`.
    pub fn overlap(&self, other: &NGramProfile<'_>) -> usize {
        self.iter().map(|(g, c)| c.min(other.count(g))).sum()
    }
}

fn require_non_empty(seq: &[String], what: &str) -> Result<()> {
    if seq.is_empty() {
        Err(Error::Precondition(alloc::format!(
            "{what} must be non-empty"
        )))
    } else {
        Ok(())
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Unigram F-1 with clipped (multiset) overlap.
pub fn f1_score(candidate: &[String], reference: &[String]) -> Result<f64> {
    require_non_empty(reference, "reference")?;
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let overlap = NGramProfile::new(candidate, 1).overlap(&NGramProfile::new(reference, 1)) as f64;
    Ok(harmonic(
        overlap / candidate.len() as f64,
        overlap / reference.len() as f64,
    ))
}

/// How zero n-gram matches are treated in sentence BLEU.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BleuSmoothing {
    /// Standard definition: any zero precision makes the score zero.
    #[default]
    None,
    /// Adds epsilon to zero match counts (NLTK "method1").
    AddEpsilon(f64),
}

/// Sentence-level BLEU with uniform weights over orders `1..=max_n`, clipped
/// counts against the maximum count in any reference, and the closest-length
/// brevity penalty (ties go to the shorter reference).
pub fn bleu_score(candidate: &[String], references: &[&[String]], max_n: usize) -> Result<f64> {
    bleu_score_with(candidate, references, max_n, BleuSmoothing::None)
}

pub fn bleu_score_with(
    candidate: &[String],
    references: &[&[String]],
    max_n: usize,
    smoothing: BleuSmoothing,
) -> Result<f64> {
    if !(1..=4).contains(&max_n) {
        return Err(Error::Argument(alloc::format!(
            "BLEU order {max_n} is outside 1..=4"
        )));
    }
    if references.is_empty() {
        return Err(Error::Precondition(
            "BLEU needs at least one reference".into(),
        ));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }

    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = NGramProfile::new(candidate, n);
        let refs: Vec<NGramProfile<'_>> =
            references.iter().map(|r| NGramProfile::new(r, n)).collect();
        let matched: usize = cand
            .iter()
            .map(|(g, c)| c.min(refs.iter().map(|r| r.count(g)).max().unwrap_or(0)))
            .sum();
        let denom = cand.total().max(1) as f64;
        let numer = match (matched, smoothing) {
            (0, BleuSmoothing::None) => return Ok(0.0),
            (0, BleuSmoothing::AddEpsilon(eps)) => eps,
            (m, _) => m as f64,
        };
        log_sum += libm::log(numer / denom);
    }
    let geo = libm::exp(log_sum / max_n as f64);
    Ok(geo * brevity_penalty(candidate.len(), references))
}

fn brevity_penalty(cand_len: usize, references: &[&[String]]) -> f64 {
    let closest = references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(cand_len), len))
        .unwrap_or(0);
    if cand_len > closest {
        1.0
    } else {
        libm::exp(1.0 - closest as f64 / cand_len as f64)
    }
}

/// Maps a word to its stem for METEOR's second matching stage.
pub trait Stemmer {
    fn stem(&self, word: &str) -> String;
}

/// Small English suffix stripper: plural `-s`/`-es`/`-ies`, `-ing`, `-ed`
/// and `-ly`, undoubling a final consonant left behind by `-ing`/`-ed`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SuffixStemmer;

impl SuffixStemmer {
    pub const VERSION: &'static str = "suffix-stemmer/1";
}

fn has_vowel(s: &str) -> bool {
    s.chars()
        .any(|c| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y'))
}

impl Stemmer for SuffixStemmer {
    fn stem(&self, word: &str) -> String {
        let w = word;
        if w.chars().count() <= 3 {
            return w.into();
        }
        if let Some(stem) = w.strip_suffix("sses") {
            return alloc::format!("{stem}ss");
        }
        if let Some(stem) = w.strip_suffix("ies") {
            return alloc::format!("{stem}y");
        }
        if w.ends_with("ss") || w.ends_with("us") || w.ends_with("is") {
            return w.into();
        }
        if let Some(stem) = w.strip_suffix('s') {
            return stem.into();
        }
        if let Some(stem) = w.strip_suffix("ly") {
            if stem.len() >= 3 {
                return stem.into();
            }
        }
        for suffix in ["ing", "ed"] {
            if let Some(stem) = w.strip_suffix(suffix) {
                if stem.len() >= 3 && has_vowel(stem) {
                    let b = stem.as_bytes();
                    let n = b.len();
                    let last = b[n - 1];
                    if last.is_ascii_lowercase()
                        && last == b[n - 2]
                        && !matches!(
                            last,
                            b'a' | b'e' | b'i' | b'o' | b'u' | b'y' | b'l' | b's' | b'z'
                        )
                    {
                        return stem[..n - 1].into();
                    }
                    return stem.into();
                }
            }
        }
        w.into()
    }
}

/// Symmetric synonym lookup for METEOR's third stage. Empty by default.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    groups: BTreeMap<String, BTreeSet<String>>,
}

impl SynonymTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares every word of `words` a synonym of every other.
    pub fn add_group<S: AsRef<str>>(&mut self, words: &[S]) {
        for a in words {
            for b in words {
                if a.as_ref() != b.as_ref() {
                    self.groups
                        .entry(a.as_ref().into())
                        .or_default()
                        .insert(b.as_ref().into());
                }
            }
        }
    }

    pub fn are_synonyms(&self, a: &str, b: &str) -> bool {
        self.groups.get(a).is_some_and(|s| s.contains(b))
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// METEOR parameters; defaults are α=0.9, β=3, γ=0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
        }
    }
}

/// Configured METEOR scorer.
pub struct Meteor<S = SuffixStemmer> {
    pub params: MeteorParams,
    pub stemmer: S,
    pub synonyms: SynonymTable,
}

impl Default for Meteor<SuffixStemmer> {
    fn default() -> Self {
        Self {
            params: MeteorParams::default(),
            stemmer: SuffixStemmer,
            synonyms: SynonymTable::new(),
        }
    }
}

/// Alignment result: matched (candidate, reference) index pairs sorted by
/// candidate position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub matches: Vec<(usize, usize)>,
}

impl Alignment {
    /// Number of maximal runs of matches adjacent in both sequences.
    pub fn chunks(&self) -> usize {
        if self.matches.is_empty() {
            return 0;
        }
        1 + self
            .matches
            .windows(2)
            .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
            .count()
    }
}

impl<S: Stemmer> Meteor<S> {
    /// Staged greedy alignment: exact, then stem, then synonym. Within a
    /// stage each unmatched candidate word, left to right, takes the first
    /// unmatched reference word that qualifies.
    pub fn align(&self, candidate: &[String], reference: &[String]) -> Alignment {
        let cand_stems: Vec<String> = candidate.iter().map(|w| self.stemmer.stem(w)).collect();
        let ref_stems: Vec<String> = reference.iter().map(|w| self.stemmer.stem(w)).collect();
        let mut cand_used = vec![false; candidate.len()];
        let mut ref_used = vec![false; reference.len()];
        let mut matches = Vec::new();

        for stage in 0..3 {
            if stage == 2 && self.synonyms.is_empty() {
                break;
            }
            for i in 0..candidate.len() {
                if cand_used[i] {
                    continue;
                }
                let hit = (0..reference.len()).find(|&j| {
                    !ref_used[j]
                        && match stage {
                            0 => candidate[i] == reference[j],
                            1 => cand_stems[i] == ref_stems[j],
                            _ => {
                                self.synonyms.are_synonyms(&candidate[i], &reference[j])
                                    || self.synonyms.are_synonyms(&cand_stems[i], &ref_stems[j])
                            }
                        }
                });
                if let Some(j) = hit {
                    cand_used[i] = true;
                    ref_used[j] = true;
                    matches.push((i, j));
                }
            }
        }
        matches.sort_unstable();
        Alignment { matches }
    }

    pub fn score(&self, candidate: &[String], reference: &[String]) -> Result<f64> {
        require_non_empty(candidate, "candidate")?;
        require_non_empty(reference, "reference")?;
        let alignment = self.align(candidate, reference);
        let m = alignment.matches.len();
        if m == 0 {
            return Ok(0.0);
        }
        let MeteorParams { alpha, beta, gamma } = self.params;
        let p = m as f64 / candidate.len() as f64;
        let r = m as f64 / reference.len() as f64;
        let fmean = p * r / (alpha * p + (1.0 - alpha) * r);
        let penalty = gamma * libm::pow(alignment.chunks() as f64 / m as f64, beta);
        Ok(fmean * (1.0 - penalty))
    }
}

/// METEOR with default parameters, the suffix stemmer and no synonyms.
pub fn meteor_score(candidate: &[String], reference: &[String]) -> Result<f64> {
    Meteor::default().score(candidate, reference)
}

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L balanced F-measure.
pub fn rouge_l_score(candidate: &[String], reference: &[String]) -> Result<f64> {
    require_non_empty(candidate, "candidate")?;
    require_non_empty(reference, "reference")?;
    let l = lcs_len(candidate, reference) as f64;
    Ok(harmonic(
        l / candidate.len() as f64,
        l / reference.len() as f64,
    ))
}
