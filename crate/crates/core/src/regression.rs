//! Linear regression from the five specific qualities to overall quality,
//! per-annotator weight profiles, and the USR combination of sub-metric
//! scores.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedDataset, Quality, QualityAnnotation};
use crate::stats::MetricScore;
use crate::{Error, Result};

pub const USR_METRIC_NAME: &str = "usr";

/// Fewest rows accepted by [`fit_regression`].
pub const MIN_ROWS: usize = 6;

const DIMS: usize = 5;

/// Values for the five specific qualities, in [`Quality::SPECIFIC`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityVector(pub [f64; DIMS]);

fn dim(quality: Quality) -> Option<usize> {
    Quality::SPECIFIC.iter().position(|&q| q == quality)
}

impl QualityVector {
    pub fn new(
        understandable: f64,
        natural: f64,
        maintains_context: f64,
        interesting: f64,
        uses_knowledge: f64,
    ) -> Self {
        Self([
            understandable,
            natural,
            maintains_context,
            interesting,
            uses_knowledge,
        ])
    }

    /// `None` for [`Quality::Overall`].
    pub fn get(&self, quality: Quality) -> Option<f64> {
        dim(quality).map(|i| self.0[i])
    }

    pub fn from_annotation(a: &QualityAnnotation) -> Self {
        Self(Quality::SPECIFIC.map(|q| f64::from(a.rating(q))))
    }
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; DIMS],
    pub std: [f64; DIMS],
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

impl Normalizer {
    pub fn fit(rows: &[QualityVector]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::DegenerateInput("no rows to normalize".into()));
        }
        let mut mean = [0.0; DIMS];
        let mut std = [0.0; DIMS];
        for k in 0..DIMS {
            let (m, s) = mean_std(rows.iter().map(|r| r.0[k]));
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::DegenerateInput(format!(
                    "{} has zero variance",
                    Quality::SPECIFIC[k].key()
                )));
            }
            mean[k] = m;
            std[k] = s;
        }
        Ok(Self { mean, std })
    }

    pub fn transform(&self, qv: &QualityVector) -> [f64; DIMS] {
        core::array::from_fn(|k| (qv.0[k] - self.mean[k]) / self.std[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub weights: [f64; DIMS],
    pub intercept: f64,
    pub normalizer: Normalizer,
}

impl RegressionModel {
    pub fn predict(&self, qv: &QualityVector) -> f64 {
        self.predict_with(&self.normalizer, qv)
    }

    /// Prediction with `normalizer` in place of the model's own statistics.
    pub fn predict_with(&self, normalizer: &Normalizer, qv: &QualityVector) -> f64 {
        let z = normalizer.transform(qv);
        self.intercept + self.weights.iter().zip(z).map(|(w, z)| w * z).sum::<f64>()
    }

    /// Softmax over the raw weights.
    pub fn weight_profile(&self) -> [f64; DIMS] {
        softmax(&self.weights)
    }
}

pub fn softmax(weights: &[f64; DIMS]) -> [f64; DIMS] {
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = weights.map(|w| libm::exp(w - max));
    let total: f64 = exps.iter().sum();
    exps.map(|e| e / total)
}

/// Ordinary least squares of `overall` on the z-scored quality vector.
pub fn fit_regression(rows: &[(QualityVector, f64)]) -> Result<RegressionModel> {
    if rows.len() < MIN_ROWS {
        return Err(Error::DegenerateInput(format!(
            "regression needs at least {MIN_ROWS} rows, got {}",
            rows.len()
        )));
    }
    if rows
        .iter()
        .any(|(qv, y)| !y.is_finite() || qv.0.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::DegenerateInput(
            "non-finite value in regression rows".into(),
        ));
    }
    let inputs: Vec<QualityVector> = rows.iter().map(|(qv, _)| *qv).collect();
    let normalizer = Normalizer::fit(&inputs)?;
    let (y_mean, y_std) = mean_std(rows.iter().map(|(_, y)| *y));
    if y_std == 0.0 {
        return Err(Error::DegenerateInput("overall has zero variance".into()));
    }

    // Centered inputs make the intercept the target mean; the weights solve
    // the 5x5 normal equations (pseudo-inverse if the inputs are collinear).
    let mut gram = SMatrix::<f64, DIMS, DIMS>::zeros();
    let mut moment = SVector::<f64, DIMS>::zeros();
    for (qv, y) in rows {
        let z = SVector::<f64, DIMS>::from(normalizer.transform(qv));
        gram += z * z.transpose();
        moment += z * (y - y_mean);
    }
    let svd = gram.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1.0);
    let w = svd
        .solve(&moment, eps)
        .map_err(|e| Error::DegenerateInput(format!("least-squares solve failed: {e}")))?;
    Ok(RegressionModel {
        weights: core::array::from_fn(|k| w[k]),
        intercept: y_mean,
        normalizer,
    })
}

/// One row per example: each quality averaged over that example's
/// annotators.
pub fn human_rows(dataset: &AnnotatedDataset) -> Vec<(QualityVector, f64)> {
    dataset
        .ratings_by_example()
        .values()
        .filter(|anns| !anns.is_empty())
        .map(|anns| {
            let n = anns.len() as f64;
            let mean = |q: Quality| anns.iter().map(|a| f64::from(a.rating(q))).sum::<f64>() / n;
            (
                QualityVector(Quality::SPECIFIC.map(mean)),
                mean(Quality::Overall),
            )
        })
        .collect()
}

/// Fits on [`human_rows`].
pub fn fit_human(dataset: &AnnotatedDataset) -> Result<RegressionModel> {
    fit_regression(&human_rows(dataset))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerAnnotatorFit {
    pub models: BTreeMap<String, RegressionModel>,
    /// Annotators left out, with the reason.
    pub excluded: Vec<(String, String)>,
}

/// One regression per annotator on that annotator's own ratings. Annotators
/// whose rows cannot support a fit are excluded with a warning.
pub fn fit_per_annotator(dataset: &AnnotatedDataset) -> Result<PerAnnotatorFit> {
    let mut rows: BTreeMap<&str, Vec<(QualityVector, f64)>> = BTreeMap::new();
    for a in dataset.annotations() {
        rows.entry(a.annotator_id.as_str())
            .or_default()
            .push((QualityVector::from_annotation(a), f64::from(a.overall)));
    }
    let mut fit = PerAnnotatorFit {
        models: BTreeMap::new(),
        excluded: Vec::new(),
    };
    for (annotator, rows) in rows {
        match fit_regression(&rows) {
            Ok(model) => {
                fit.models.insert(annotator.to_string(), model);
            }
            Err(e) => {
                log::warn!("annotator {annotator} excluded from per-annotator fit: {e}");
                fit.excluded.push((annotator.to_string(), e.to_string()));
            }
        }
    }
    if fit.models.is_empty() {
        return Err(Error::InsufficientData(
            "no annotator has enough usable ratings".into(),
        ));
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    Positive,
    /// The metric decreases with quality; its values are negated.
    Negative,
}

impl Orientation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Orientation::Positive => v,
            Orientation::Negative => -v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedMetric {
    pub metric: String,
    #[serde(default)]
    pub orientation: Orientation,
}

impl MappedMetric {
    pub fn positive(metric: &str) -> Self {
        Self {
            metric: metric.into(),
            orientation: Orientation::Positive,
        }
    }
}

/// Which sub-metric stands in for each specific quality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubMetricMapping {
    pub understandable: MappedMetric,
    pub natural: MappedMetric,
    pub maintains_context: MappedMetric,
    pub interesting: MappedMetric,
    pub uses_knowledge: MappedMetric,
}

impl Default for SubMetricMapping {
    fn default() -> Self {
        Self::topical_chat()
    }
}

impl SubMetricMapping {
    pub fn topical_chat() -> Self {
        use crate::mlm::METRIC_NAME as MLM;
        use crate::retrieval::{CONTEXT_METRIC_NAME as DRC, FACT_METRIC_NAME as DRF};
        Self {
            understandable: MappedMetric::positive(MLM),
            natural: MappedMetric::positive(MLM),
            maintains_context: MappedMetric::positive(DRC),
            interesting: MappedMetric::positive(DRC),
            uses_knowledge: MappedMetric::positive(DRF),
        }
    }

    pub fn persona_chat() -> Self {
        use crate::mlm::METRIC_NAME as MLM;
        use crate::retrieval::CONTEXT_METRIC_NAME as DRC;
        Self {
            understandable: MappedMetric::positive(MLM),
            natural: MappedMetric::positive(DRC),
            maintains_context: MappedMetric::positive(DRC),
            interesting: MappedMetric::positive(DRC),
            uses_knowledge: MappedMetric::positive(DRC),
        }
    }

    /// Every dimension mapped to `metric`.
    pub fn uniform(metric: &str) -> Self {
        let m = MappedMetric::positive(metric);
        Self {
            understandable: m.clone(),
            natural: m.clone(),
            maintains_context: m.clone(),
            interesting: m.clone(),
            uses_knowledge: m,
        }
    }

    /// Accepts a preset name (`topical-chat`, `persona-chat`) or a comma list
    /// of `quality=metric` overrides on the Topical-Chat preset, where a
    /// leading `-` on the metric marks it as decreasing with quality.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.trim() {
            "topical-chat" | "tc" => return Ok(Self::topical_chat()),
            "persona-chat" | "pc" => return Ok(Self::persona_chat()),
            _ => {}
        }
        let mut mapping = Self::topical_chat();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (q, m) = part.split_once('=').ok_or_else(|| {
                Error::Argument(format!("mapping entry `{part}` is not quality=metric"))
            })?;
            let quality = Quality::parse(q)
                .filter(|q| *q != Quality::Overall)
                .ok_or_else(|| Error::Argument(format!("unknown quality `{q}` in mapping")))?;
            let m = m.trim();
            let entry = match m.strip_prefix('-') {
                Some(name) => MappedMetric {
                    metric: name.into(),
                    orientation: Orientation::Negative,
                },
                None => MappedMetric::positive(m),
            };
            if entry.metric.is_empty() {
                return Err(Error::Argument(format!("empty metric name for `{q}`")));
            }
            *mapping.get_mut(quality).expect("specific quality") = entry;
        }
        Ok(mapping)
    }

    pub fn get(&self, quality: Quality) -> Option<&MappedMetric> {
        Some(match quality {
            Quality::Understandable => &self.understandable,
            Quality::Natural => &self.natural,
            Quality::MaintainsContext => &self.maintains_context,
            Quality::Interesting => &self.interesting,
            Quality::UsesKnowledge => &self.uses_knowledge,
            Quality::Overall => return None,
        })
    }

    fn get_mut(&mut self, quality: Quality) -> Option<&mut MappedMetric> {
        Some(match quality {
            Quality::Understandable => &mut self.understandable,
            Quality::Natural => &mut self.natural,
            Quality::MaintainsContext => &mut self.maintains_context,
            Quality::Interesting => &mut self.interesting,
            Quality::UsesKnowledge => &mut self.uses_knowledge,
            Quality::Overall => return None,
        })
    }

    fn entries(&self) -> [&MappedMetric; DIMS] {
        Quality::SPECIFIC.map(|q| self.get(q).expect("specific quality"))
    }

    /// Distinct metric names, sorted.
    pub fn metrics(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.entries().iter().map(|m| m.metric.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names
    }

    /// Oriented sub-metric vector for one example, looked up in `scores`
    /// (metric name to value).
    pub fn assemble(
        &self,
        example_id: &str,
        scores: &BTreeMap<&str, f64>,
    ) -> Result<QualityVector> {
        let mut out = [0.0; DIMS];
        for (k, m) in self.entries().iter().enumerate() {
            let v = scores
                .get(m.metric.as_str())
                .copied()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::IncompleteInput(format!(
                        "example `{example_id}` has no `{}` score",
                        m.metric
                    ))
                })?;
            out[k] = m.orientation.apply(v);
        }
        Ok(QualityVector(out))
    }

    /// Oriented sub-metric vectors for every example that appears in
    /// `scores`, sorted by example id. Any example lacking a mapped metric
    /// fails the whole batch.
    pub fn assemble_batch(&self, scores: &[MetricScore]) -> Result<Vec<(String, QualityVector)>> {
        let mut by_example: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
        for s in scores {
            let row = by_example.entry(s.example_id.as_str()).or_default();
            if let Some(v) = s.value {
                row.insert(s.metric.as_str(), v);
            }
        }
        by_example
            .iter()
            .map(|(id, row)| Ok((id.to_string(), self.assemble(id, row)?)))
            .collect()
    }
}

/// Statistics used to z-score sub-metric vectors before prediction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NormStats {
    /// Fit over the batch being scored.
    #[default]
    Batch,
    /// Fixed statistics supplied by the caller.
    Frozen(Normalizer),
}

/// USR score of one assembled sub-metric vector.
pub fn usr_score(model: &RegressionModel, normalizer: &Normalizer, qv: &QualityVector) -> f64 {
    model.predict_with(normalizer, qv)
}

/// USR scores for a batch of assembled sub-metric vectors.
pub fn usr_scores(
    model: &RegressionModel,
    batch: &[(String, QualityVector)],
    norm: NormStats,
) -> Result<Vec<MetricScore>> {
    let normalizer = match norm {
        NormStats::Batch => {
            let rows: Vec<QualityVector> = batch.iter().map(|(_, qv)| *qv).collect();
            Normalizer::fit(&rows)?
        }
        NormStats::Frozen(n) => n,
    };
    Ok(batch
        .iter()
        .map(|(id, qv)| {
            MetricScore::new(
                id.clone(),
                USR_METRIC_NAME,
                usr_score(model, &normalizer, qv),
            )
        })
        .collect())
}
