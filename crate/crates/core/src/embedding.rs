//! Embedding-based referenced metrics: greedy matching, embedding average,
//! vector extrema and BERTScore-style recall.

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::hash::{fnv1a, mix64};
use crate::{Error, Result};

pub mod names {
    pub const GREEDY: &str = "greedy-matching";
    pub const AVERAGE: &str = "embedding-average";
    pub const EXTREMA: &str = "vector-extrema";
    pub const BERTSCORE: &str = "bertscore";
}

/// What to do with tokens that have no vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    #[default]
    Skip,
    ZeroVector,
}

/// Static word vectors of a fixed dimension.
pub trait WordEmbedder {
    fn dim(&self) -> usize;

    fn lookup(&self, token: &str) -> Option<Cow<'_, [f64]>>;

    fn oov_policy(&self) -> OovPolicy {
        OovPolicy::Skip
    }
}

/// Per-token contextual vectors (one per input token).
pub trait ContextualEmbedder {
    fn encode(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// In-memory table of word vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StaticEmbeddings {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    oov: OovPolicy,
}

impl StaticEmbeddings {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: BTreeMap::new(),
            oov: OovPolicy::Skip,
        }
    }

    pub fn with_oov_policy(mut self, oov: OovPolicy) -> Self {
        self.oov = oov;
        self
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(Error::Argument(format!(
                "vector for `{token}` has dimension {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert(token, vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl WordEmbedder for StaticEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn lookup(&self, token: &str) -> Option<Cow<'_, [f64]>> {
        self.vectors.get(token).map(|v| Cow::Borrowed(v.as_slice()))
    }

    fn oov_policy(&self) -> OovPolicy {
        self.oov
    }
}

/// Deterministic pseudo-random vectors derived from a hash of each token.
/// Every token is in vocabulary. Used for tests and smoke runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
    /// Restrict components to `[0, 1)` instead of `[-1, 1)`.
    pub non_negative: bool,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            non_negative: false,
        }
    }

    fn vector(&self, token: &str) -> Vec<f64> {
        let base = fnv1a(token.as_bytes()) ^ self.seed;
        (0..self.dim as u64)
            .map(|k| {
                let bits = mix64(base.wrapping_add(k.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
                let unit = (bits >> 11) as f64 / (1u64 << 53) as f64;
                if self.non_negative {
                    unit
                } else {
                    2.0 * unit - 1.0
                }
            })
            .collect()
    }
}

impl WordEmbedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn lookup(&self, token: &str) -> Option<Cow<'_, [f64]>> {
        Some(Cow::Owned(self.vector(token)))
    }
}

/// Toy contextual encoder: each token's static vector plus half of each
/// neighbour's, so identical words in different contexts differ.
#[derive(Debug, Clone)]
pub struct NeighbourMixEncoder<E> {
    pub words: E,
}

impl<E: WordEmbedder> ContextualEmbedder for NeighbourMixEncoder<E> {
    fn encode(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        let d = self.words.dim();
        let base: Vec<Vec<f64>> = tokens
            .iter()
            .map(|t| {
                self.words
                    .lookup(t)
                    .map(|v| v.into_owned())
                    .unwrap_or_else(|| vec![0.0; d])
            })
            .collect();
        Ok((0..base.len())
            .map(|i| {
                let mut v = base[i].clone();
                for j in [i.wrapping_sub(1), i + 1] {
                    if let Some(n) = base.get(j) {
                        v.iter_mut().zip(n).for_each(|(a, b)| *a += 0.5 * b);
                    }
                }
                v
            })
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Cosine similarity, or `None` when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
    }
}

fn embed_all<E: WordEmbedder + ?Sized>(tokens: &[String], emb: &E) -> Vec<Vec<f64>> {
    tokens
        .iter()
        .filter_map(|t| match (emb.lookup(t), emb.oov_policy()) {
            (Some(v), _) => Some(v.into_owned()),
            (None, OovPolicy::Skip) => None,
            (None, OovPolicy::ZeroVector) => Some(vec![0.0; emb.dim()]),
        })
        .collect()
}

fn embed_side<E: WordEmbedder + ?Sized>(
    tokens: &[String],
    emb: &E,
    side: &str,
) -> Result<Vec<Vec<f64>>> {
    let v = embed_all(tokens, emb);
    if v.is_empty() {
        Err(Error::UndefinedScore(format!(
            "{side} has no embeddable tokens"
        )))
    } else {
        Ok(v)
    }
}

/// Mean over `from` vectors of the best cosine against any `to` vector.
/// Zero vectors contribute a cosine of 0.
fn directed_greedy(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|a| {
            to.iter()
                .map(|b| cosine(a, b).unwrap_or(0.0))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    total / from.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GreedyDirection {
    /// Mean of candidate→reference and reference→candidate.
    #[default]
    Bidirectional,
    /// Candidate words matched against the reference only.
    CandidateToReference,
}

pub fn greedy_matching<E: WordEmbedder + ?Sized>(
    candidate: &[String],
    reference: &[String],
    emb: &E,
) -> Result<f64> {
    greedy_matching_with(candidate, reference, emb, GreedyDirection::Bidirectional)
}

pub fn greedy_matching_with<E: WordEmbedder + ?Sized>(
    candidate: &[String],
    reference: &[String],
    emb: &E,
    direction: GreedyDirection,
) -> Result<f64> {
    let c = embed_side(candidate, emb, "candidate")?;
    let r = embed_side(reference, emb, "reference")?;
    let forward = directed_greedy(&c, &r);
    Ok(match direction {
        GreedyDirection::CandidateToReference => forward,
        GreedyDirection::Bidirectional => 0.5 * (forward + directed_greedy(&r, &c)),
    })
}

fn mean_vector(vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for v in vectors {
        out.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    let n = vectors.len() as f64;
    out.iter_mut().for_each(|a| *a /= n);
    out
}

/// Per dimension, the component of largest magnitude (sign kept). Ties in
/// magnitude keep the earliest vector's value.
pub fn extrema_vector(vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vectors[0].clone();
    for v in &vectors[1..] {
        for (a, &b) in out.iter_mut().zip(v) {
            if b.abs() > a.abs() {
                *a = b;
            }
        }
    }
    out
}

pub fn embedding_average<E: WordEmbedder + ?Sized>(
    candidate: &[String],
    reference: &[String],
    emb: &E,
) -> Result<f64> {
    let c = mean_vector(&embed_side(candidate, emb, "candidate")?);
    let r = mean_vector(&embed_side(reference, emb, "reference")?);
    cosine(&c, &r).ok_or_else(|| Error::UndefinedScore("mean word vector is zero".into()))
}

pub fn vector_extrema<E: WordEmbedder + ?Sized>(
    candidate: &[String],
    reference: &[String],
    emb: &E,
) -> Result<f64> {
    let c = extrema_vector(&embed_side(candidate, emb, "candidate")?);
    let r = extrema_vector(&embed_side(reference, emb, "reference")?);
    cosine(&c, &r).ok_or_else(|| Error::UndefinedScore("extrema vector is zero".into()))
}

/// Recall-oriented BERTScore: each reference token takes its best cosine
/// against the candidate tokens; the score is the unweighted mean.
pub fn bertscore_recall<E: ContextualEmbedder + ?Sized>(
    candidate: &[String],
    reference: &[String],
    enc: &E,
) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::Precondition(
            "BERTScore needs non-empty candidate and reference".into(),
        ));
    }
    let encode = |tokens: &[String]| -> Result<Vec<Vec<f64>>> {
        let out = enc.encode(tokens)?;
        if out.len() != tokens.len() {
            return Err(Error::Backend(format!(
                "encoder returned {} vectors for {} tokens",
                out.len(),
                tokens.len()
            )));
        }
        Ok(out)
    };
    let c = encode(candidate)?;
    let r = encode(reference)?;
    Ok(directed_greedy(&r, &c))
}
