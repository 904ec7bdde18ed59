//! Dialog-retrieval sub-metric: the probability, under a binary retrieval
//! classifier, that `r` is the true response to `x`.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_retrieval_examples, DialogCorpus, RetrievalExample, RetrievalVariant};
use crate::hash::fnv1a;
use crate::{Error, Result};

pub const CONTEXT_METRIC_NAME: &str = "usr-dr-c";
pub const FACT_METRIC_NAME: &str = "usr-dr-f";

/// Negatives per positive when the caller does not choose.
pub const DEFAULT_NEGATIVE_RATIO: usize = 1;

pub fn metric_name(variant: RetrievalVariant) -> &'static str {
    match variant {
        RetrievalVariant::Context => CONTEXT_METRIC_NAME,
        RetrievalVariant::Fact => FACT_METRIC_NAME,
    }
}

/// Binary classifier over (x, r) pairs. `score` must lie strictly inside
/// `(0, 1)`.
pub trait RetrievalBackend {
    fn id(&self) -> &str;

    fn score(&self, x: &[String], r: &[String]) -> Result<f64>;

    fn train(&mut self, _examples: &[RetrievalExample]) -> Result<()> {
        Err(Error::Unsupported(self.id().to_string()))
    }
}

impl<B: RetrievalBackend + ?Sized> RetrievalBackend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn score(&self, x: &[String], r: &[String]) -> Result<f64> {
        (**self).score(x, r)
    }
}

impl<B: RetrievalBackend + ?Sized> RetrievalBackend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn score(&self, x: &[String], r: &[String]) -> Result<f64> {
        (**self).score(x, r)
    }

    fn train(&mut self, examples: &[RetrievalExample]) -> Result<()> {
        (**self).train(examples)
    }
}

/// Validated `P(y = 1 | x, r)`.
pub fn dr_score<B: RetrievalBackend + ?Sized>(
    x: &[String],
    r: &[String],
    backend: &B,
) -> Result<f64> {
    if x.is_empty() || r.is_empty() {
        return Err(Error::Precondition(
            "retrieval input and response must be non-empty".into(),
        ));
    }
    let p = backend.score(x, r)?;
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(Error::BackendContract(format!(
            "backend `{}` returned probability {p} outside (0, 1)",
            backend.id()
        )))
    }
}

/// Builds retrieval examples from `corpus` and trains `backend` on them.
pub fn train_dr<B: RetrievalBackend>(
    mut backend: B,
    corpus: &DialogCorpus,
    variant: RetrievalVariant,
    negative_ratio: usize,
    seed: u64,
) -> Result<B> {
    let examples = build_retrieval_examples(corpus, variant, negative_ratio, seed)?;
    backend.train(&examples)?;
    Ok(backend)
}

/// Fraction of `examples` classified correctly at threshold 0.5.
pub fn accuracy<B: RetrievalBackend + ?Sized>(
    backend: &B,
    examples: &[RetrievalExample],
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Precondition("no examples to evaluate".into()));
    }
    let mut correct = 0usize;
    for ex in examples {
        let p = dr_score(&ex.x, &ex.r, backend)?;
        if (p >= 0.5) == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

/// Returns the same probability for every pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantRetrieval {
    pub probability: f64,
}

impl ConstantRetrieval {
    pub const ID: &'static str = "toy-constant";
}

impl RetrievalBackend for ConstantRetrieval {
    fn id(&self) -> &str {
        Self::ID
    }

    fn score(&self, _x: &[String], _r: &[String]) -> Result<f64> {
        Ok(self.probability)
    }
}

/// Logistic regression on bag-of-words overlap features: the share of
/// response words found in `x`, the share of `x` words found in the
/// response, the log count of shared words, and hashed indicators of each
/// shared word. Trained by seeded SGD, so training is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowLogistic {
    pub buckets: usize,
    pub epochs: u32,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    weights: Vec<f64>,
    bias: f64,
}

const DENSE_FEATURES: usize = 3;
/// Logit clamp: keeps probabilities strictly inside (0, 1) in f64.
const MAX_LOGIT: f64 = 30.0;

impl BowLogistic {
    pub const ID: &'static str = "toy-bow-logistic";

    pub fn new(seed: u64) -> Self {
        Self::with_buckets(1024, seed)
    }

    pub fn with_buckets(buckets: usize, seed: u64) -> Self {
        Self {
            buckets,
            epochs: 10,
            learning_rate: 0.1,
            l2: 1e-4,
            seed,
            weights: vec![0.0; DENSE_FEATURES + buckets],
            bias: 0.0,
        }
    }

    fn features(&self, x: &[String], r: &[String]) -> Vec<(usize, f64)> {
        let xs: BTreeSet<&str> = x.iter().map(String::as_str).collect();
        let rs: BTreeSet<&str> = r.iter().map(String::as_str).collect();
        let shared: Vec<&str> = rs.intersection(&xs).copied().collect();
        let k = shared.len() as f64;
        let mut out = vec![
            (
                0,
                if rs.is_empty() {
                    0.0
                } else {
                    k / rs.len() as f64
                },
            ),
            (
                1,
                if xs.is_empty() {
                    0.0
                } else {
                    k / xs.len() as f64
                },
            ),
            (2, libm::log1p(k)),
        ];
        if self.buckets > 0 {
            for w in shared {
                let b = (fnv1a(w.as_bytes()) % self.buckets as u64) as usize;
                out.push((DENSE_FEATURES + b, 1.0));
            }
        }
        out
    }

    fn logit(&self, features: &[(usize, f64)]) -> f64 {
        let z = self.bias
            + features
                .iter()
                .map(|&(i, v)| self.weights[i] * v)
                .sum::<f64>();
        z.clamp(-MAX_LOGIT, MAX_LOGIT)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

impl RetrievalBackend for BowLogistic {
    fn id(&self) -> &str {
        Self::ID
    }

    fn score(&self, x: &[String], r: &[String]) -> Result<f64> {
        Ok(sigmoid(self.logit(&self.features(x, r))))
    }

    fn train(&mut self, examples: &[RetrievalExample]) -> Result<()> {
        if examples.is_empty() {
            return Err(Error::Precondition(
                "no retrieval examples to train on".into(),
            ));
        }
        if self.weights.len() != DENSE_FEATURES + self.buckets {
            self.weights = vec![0.0; DENSE_FEATURES + self.buckets];
        }
        let data: Vec<(Vec<(usize, f64)>, f64)> = examples
            .iter()
            .map(|e| (self.features(&e.x, &e.r), if e.label { 1.0 } else { 0.0 }))
            .collect();
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let (feats, y) = &data[i];
                let grad = sigmoid(self.logit(feats)) - y;
                self.bias -= self.learning_rate * grad;
                for &(j, v) in feats {
                    let w = &mut self.weights[j];
                    *w -= self.learning_rate * (grad * v + self.l2 * *w);
                }
            }
        }
        Ok(())
    }
}
