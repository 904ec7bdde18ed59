//! Correlation statistics and the benchmark protocol: turn-level and
//! system-level correlation of metric scores with human ratings, and pairwise
//! inter-annotator agreement.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedDataset, Quality};
use crate::special::student_t_two_sided;
use crate::{Error, Result};

/// Significance level used to flag report cells.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Largest sample for which exact permutation p-values are enumerated.
pub const MAX_PERMUTATION_N: usize = 9;

/// One metric value for one example. `value` is `None` when the metric is
/// undefined for the example (for instance a referenced metric without a
/// reference); `reason` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub example_id: String,
    pub metric: String,
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl MetricScore {
    pub fn new(example_id: impl Into<String>, metric: impl Into<String>, value: f64) -> Self {
        Self {
            example_id: example_id.into(),
            metric: metric.into(),
            value: Some(value),
            reason: None,
        }
    }

    pub fn missing(
        example_id: impl Into<String>,
        metric: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        Self {
            example_id: example_id.into(),
            metric: metric.into(),
            value: None,
            reason: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    /// Student-t approximation with `n - 2` degrees of freedom.
    #[default]
    TApprox,
    /// Exact two-sided permutation test (n up to [`MAX_PERMUTATION_N`]).
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

/// 1-based ranks with ties given the mean of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::UndefinedCorrelation(format!(
            "length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 3 pairs, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite value".into()));
    }
    Ok(())
}

fn product_moment(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

fn t_approx_p(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    student_t_two_sided(r * libm::sqrt(df / (1.0 - r * r)), df)
}

/// Exact two-sided p-value: share of all orderings of `y` whose correlation
/// with `x` is at least as extreme as the observed one.
fn permutation_p(x: &[f64], y: &[f64], observed: f64) -> Result<f64> {
    let n = y.len();
    if n > MAX_PERMUTATION_N {
        return Err(Error::Argument(format!(
            "exact permutation test supports n <= {MAX_PERMUTATION_N}, got {n}"
        )));
    }
    let threshold = observed.abs() - 1e-12;
    let mut perm: Vec<f64> = y.to_vec();
    let mut c = alloc::vec![0usize; n];
    let (mut hits, mut total) = (0u64, 0u64);
    let mut visit = |p: &[f64]| {
        total += 1;
        // Every permutation of a non-constant vector is non-constant.
        if product_moment(x, p)
            .map(|r| r.abs() >= threshold)
            .unwrap_or(false)
        {
            hits += 1;
        }
    };
    // Heap's algorithm.
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    pearson_with(x, y, PValueMethod::TApprox)
}

pub fn pearson_with(x: &[f64], y: &[f64], method: PValueMethod) -> Result<Correlation> {
    check_inputs(x, y)?;
    let r = product_moment(x, y)?;
    let p_value = match method {
        PValueMethod::TApprox => t_approx_p(r, x.len()),
        PValueMethod::Permutation => permutation_p(x, y, r)?,
    };
    Ok(Correlation {
        coefficient: r,
        p_value,
        n: x.len(),
    })
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    spearman_with(x, y, PValueMethod::TApprox)
}

pub fn spearman_with(x: &[f64], y: &[f64], method: PValueMethod) -> Result<Correlation> {
    check_inputs(x, y)?;
    pearson_with(&average_ranks(x), &average_ranks(y), method)
}

/// How several annotators' ratings of one response are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HumanAggregation {
    #[default]
    Mean,
    Median,
}

impl HumanAggregation {
    pub fn apply(self, values: &mut [f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        Some(match self {
            HumanAggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            HumanAggregation::Median => {
                values.sort_by(f64::total_cmp);
                let m = values.len() / 2;
                if values.len() % 2 == 1 {
                    values[m]
                } else {
                    0.5 * (values[m - 1] + values[m])
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TableOptions {
    pub include_ground_truth: bool,
    pub aggregation: HumanAggregation,
}

/// Metric scores and aggregated human ratings keyed by example.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    metrics: BTreeMap<(String, String), f64>,
    human: BTreeMap<(String, Quality), f64>,
    systems: BTreeMap<String, String>,
}

impl ScoreTable {
    /// Builds the table for the examples of `dataset`, dropping ground-truth
    /// responses unless `options.include_ground_truth` is set. Scores for
    /// dropped examples are ignored; scores for unknown examples and
    /// duplicate (example, metric) keys are integrity errors.
    pub fn from_dataset<'a>(
        dataset: &AnnotatedDataset,
        scores: impl IntoIterator<Item = &'a MetricScore>,
        options: TableOptions,
    ) -> Result<Self> {
        let mut table = ScoreTable::default();
        for ex in dataset.examples() {
            if ex.is_ground_truth() && !options.include_ground_truth {
                continue;
            }
            table
                .systems
                .insert(ex.example_id.clone(), ex.system_id.clone());
        }
        for (example_id, anns) in dataset.ratings_by_example() {
            if !table.systems.contains_key(example_id) {
                continue;
            }
            for q in Quality::ALL {
                let mut vals: Vec<f64> = anns.iter().map(|a| f64::from(a.rating(q))).collect();
                if let Some(v) = options.aggregation.apply(&mut vals) {
                    table.human.insert((example_id.into(), q), v);
                }
            }
        }
        for s in scores {
            if dataset.example(&s.example_id).is_none() {
                return Err(Error::Integrity(format!(
                    "score for unknown example `{}`",
                    s.example_id
                )));
            }
            if !table.systems.contains_key(&s.example_id) {
                continue;
            }
            if let Some(v) = s.value.filter(|v| v.is_finite()) {
                table.insert_metric(&s.example_id, &s.metric, v)?;
            }
        }
        Ok(table)
    }

    pub fn insert_metric(&mut self, example_id: &str, metric: &str, value: f64) -> Result<()> {
        if !self.systems.contains_key(example_id) {
            return Err(Error::Integrity(format!(
                "example `{example_id}` is not in the table"
            )));
        }
        let key = (String::from(example_id), String::from(metric));
        if self.metrics.insert(key, value).is_some() {
            return Err(Error::Integrity(format!(
                "duplicate score for ({example_id}, {metric})"
            )));
        }
        Ok(())
    }

    pub fn example_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.systems.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    /// Metric names present in the table, sorted.
    pub fn metric_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.metrics.keys().map(|(_, m)| m.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names
    }

    pub fn metric(&self, example_id: &str, metric: &str) -> Option<f64> {
        self.metrics
            .get(&(String::from(example_id), String::from(metric)))
            .copied()
    }

    pub fn human(&self, example_id: &str, quality: Quality) -> Option<f64> {
        self.human
            .get(&(String::from(example_id), quality))
            .copied()
    }

    pub fn system(&self, example_id: &str) -> Option<&str> {
        self.systems.get(example_id).map(String::as_str)
    }

    /// (example, system, metric value, human rating) for every example that
    /// has both values.
    fn pairs<'a>(
        &'a self,
        metric: &'a str,
        quality: Quality,
    ) -> impl Iterator<Item = (&'a str, f64, f64)> + 'a {
        self.systems.iter().filter_map(move |(id, sys)| {
            let m = self.metric(id, metric)?;
            let h = self.human(id, quality)?;
            Some((sys.as_str(), m, h))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Turn,
    System,
}

/// One cell of a correlation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub metric: String,
    pub quality: Quality,
    pub level: Level,
    pub spearman: f64,
    pub p_spearman: f64,
    pub pearson: f64,
    pub p_pearson: f64,
    pub n: usize,
}

impl CorrelationReport {
    fn from_pair(
        metric: &str,
        quality: Quality,
        level: Level,
        s: Correlation,
        p: Correlation,
    ) -> Self {
        Self {
            metric: metric.into(),
            quality,
            level,
            spearman: s.coefficient,
            p_spearman: s.p_value,
            pearson: p.coefficient,
            p_pearson: p.p_value,
            n: s.n,
        }
    }

    pub fn spearman_significant(&self) -> bool {
        self.p_spearman <= SIGNIFICANCE_LEVEL
    }

    pub fn pearson_significant(&self) -> bool {
        self.p_pearson <= SIGNIFICANCE_LEVEL
    }
}

/// Correlation of per-response metric scores with per-response aggregated
/// human ratings. Responses missing either value are dropped.
pub fn turn_level(table: &ScoreTable, metric: &str, quality: Quality) -> Result<CorrelationReport> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        table.pairs(metric, quality).map(|(_, m, h)| (m, h)).unzip();
    let s = spearman(&xs, &ys)?;
    let p = pearson(&xs, &ys)?;
    Ok(CorrelationReport::from_pair(
        metric,
        quality,
        Level::Turn,
        s,
        p,
    ))
}

pub fn system_level(
    table: &ScoreTable,
    metric: &str,
    quality: Quality,
) -> Result<CorrelationReport> {
    system_level_with(table, metric, quality, PValueMethod::TApprox)
}

/// Correlation of per-system mean metric scores with per-system mean human
/// ratings, over responses that have both values.
pub fn system_level_with(
    table: &ScoreTable,
    metric: &str,
    quality: Quality,
    method: PValueMethod,
) -> Result<CorrelationReport> {
    let mut sums: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for (sys, m, h) in table.pairs(metric, quality) {
        let e = sums.entry(sys).or_insert((0.0, 0.0, 0));
        e.0 += m;
        e.1 += h;
        e.2 += 1;
    }
    if sums.len() < 3 {
        return Err(Error::InsufficientSystems(sums.len()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = sums
        .values()
        .map(|&(m, h, k)| (m / k as f64, h / k as f64))
        .unzip();
    let s = spearman_with(&xs, &ys, method)?;
    let p = pearson_with(&xs, &ys, method)?;
    Ok(CorrelationReport::from_pair(
        metric,
        quality,
        Level::System,
        s,
        p,
    ))
}

/// Mean pairwise agreement between annotators on one quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub quality: Quality,
    pub spearman: f64,
    pub pearson: f64,
    /// Annotator pairs that contributed.
    pub pairs: usize,
}

/// For every unordered pair of annotators sharing at least three examples,
/// correlates their ratings on the shared examples; returns the means over
/// pairs. Pairs whose ratings are constant on the shared examples have no
/// defined correlation and are skipped.
pub fn inter_annotator_agreement(
    dataset: &AnnotatedDataset,
    quality: Quality,
) -> Result<Agreement> {
    let mut by_annotator: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for a in dataset.annotations() {
        by_annotator
            .entry(a.annotator_id.as_str())
            .or_default()
            .insert(a.example_id.as_str(), f64::from(a.rating(quality)));
    }
    let annotators: Vec<(&str, &BTreeMap<&str, f64>)> =
        by_annotator.iter().map(|(k, v)| (*k, v)).collect();
    let (mut s_sum, mut p_sum, mut pairs) = (0.0, 0.0, 0usize);
    for (i, (a_id, a)) in annotators.iter().enumerate() {
        for (b_id, b) in &annotators[i + 1..] {
            let (xs, ys): (Vec<f64>, Vec<f64>) = a
                .iter()
                .filter_map(|(ex, &ra)| b.get(ex).map(|&rb| (ra, rb)))
                .unzip();
            if xs.len() < 3 {
                continue;
            }
            match (spearman(&xs, &ys), pearson(&xs, &ys)) {
                (Ok(s), Ok(p)) => {
                    s_sum += s.coefficient;
                    p_sum += p.coefficient;
                    pairs += 1;
                }
                _ => log::warn!(
                    "agreement on {quality}: pair ({a_id}, {b_id}) has constant ratings, skipped"
                ),
            }
        }
    }
    if pairs == 0 {
        return Err(Error::InsufficientData(format!(
            "no annotator pair shares at least 3 examples with non-constant {quality} ratings"
        )));
    }
    Ok(Agreement {
        quality,
        spearman: s_sum / pairs as f64,
        pearson: p_sum / pairs as f64,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DialogContext, DialogExample, Fact, QualityAnnotation};
    use crate::TokenSequence;
    use alloc::string::ToString;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[1.0, 2.0, 2.0, 4.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 3.0]),
            vec![3.0, 1.0, 3.0, 3.0]
        );
    }

    #[test]
    fn spearman_examples() {
        assert!(close(
            spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0])
                .unwrap()
                .coefficient,
            1.0,
            1e-15
        ));
        assert!(close(
            spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0])
                .unwrap()
                .coefficient,
            -1.0,
            1e-15
        ));
        // ranks (1, 2.5, 2.5, 4) vs (1, 3, 2, 4): cov 4.5 / sqrt(4.5 * 5)
        let r = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0])
            .unwrap()
            .coefficient;
        assert!(close(r, 4.5 / libm::sqrt(4.5 * 5.0), 1e-15));
        assert!(close(r, 0.9487, 5e-5));
    }

    #[test]
    fn pearson_examples() {
        let x = [0.0, 1.0, 2.0];
        assert!(close(
            pearson(&x, &[1.0, 3.0, 5.0]).unwrap().coefficient,
            1.0,
            1e-15
        ));
        assert!(close(
            pearson(&x, &[0.0, -1.0, -2.0]).unwrap().coefficient,
            -1.0,
            1e-15
        ));
        // cov 4, var_x 2, var_y 8.6667: 4 / sqrt(2 * 26/3)
        let r = pearson(&x, &[0.0, 1.0, 4.0]).unwrap().coefficient;
        assert!(close(r, 4.0 / libm::sqrt(2.0 * 26.0 / 3.0), 1e-15));
        assert!(close(r, 0.9608, 5e-5));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            pearson(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn p_values() {
        let perfect = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert_eq!(perfect.p_value, 0.0);
        // r = 0.5, n = 6: t = 0.5 * sqrt(4 / 0.75) = 1.1547, df 4, p ~ 0.3125
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
        let c = pearson(&x, &y).unwrap();
        assert!(c.p_value > 0.0 && c.p_value < 1.0);
    }

    #[test]
    fn permutation_p_value_small_n() {
        // n = 5 monotone: only the identity and its reversal reach |rho| = 1,
        // so p = 2 / 120.
        let c = spearman_with(
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            PValueMethod::Permutation,
        )
        .unwrap();
        assert!(close(c.p_value, 2.0 / 120.0, 1e-15));
        let big: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(matches!(
            pearson_with(&big, &big, PValueMethod::Permutation),
            Err(Error::Argument(_))
        ));
    }

    fn dataset(rows: &[(&str, &str, [i64; 6])], systems: &[(&str, &str)]) -> AnnotatedDataset {
        let examples = systems
            .iter()
            .map(|(id, sys)| DialogExample {
                example_id: id.to_string(),
                context: DialogContext::new(vec![TokenSequence::from("hi")]).unwrap(),
                fact: Fact::default(),
                response: TokenSequence::from("hello"),
                reference: None,
                system_id: sys.to_string(),
            })
            .collect();
        let anns = rows
            .iter()
            .map(|(ex, ann, r)| QualityAnnotation::from_ratings(*ex, *ann, *r).unwrap())
            .collect();
        AnnotatedDataset::new(examples, anns).unwrap()
    }

    #[test]
    fn agreement_identical_annotators() {
        let mut rows = Vec::new();
        let ids = ["e1", "e2", "e3", "e4"];
        for (i, ex) in ids.iter().enumerate() {
            let r = [1, 2, 2, 1, 0, (i + 1) as i64];
            rows.push((*ex, "a", r));
            rows.push((*ex, "b", r));
        }
        let systems: Vec<(&str, &str)> = ids.iter().map(|e| (*e, "s")).collect();
        let ds = dataset(&rows, &systems);
        let ag = inter_annotator_agreement(&ds, Quality::Overall).unwrap();
        assert!(close(ag.spearman, 1.0, 1e-12) && close(ag.pearson, 1.0, 1e-12));
        assert_eq!(ag.pairs, 1);
        // Natural is constant for both annotators: no defined pair.
        assert!(matches!(
            inter_annotator_agreement(&ds, Quality::Natural),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn turn_and_system_level() {
        let systems = [
            ("a1", "A"),
            ("a2", "A"),
            ("b1", "B"),
            ("b2", "B"),
            ("c1", "C"),
            ("c2", "C"),
            ("g1", crate::GROUND_TRUTH_SYSTEM),
        ];
        let overall = [1, 2, 2, 3, 4, 5, 5];
        let rows: Vec<(&str, &str, [i64; 6])> = systems
            .iter()
            .zip(overall)
            .map(|((id, _), o)| (*id, "x", [1, 2, 2, 2, 1, o]))
            .collect();
        let ds = dataset(&rows, &systems);
        let scores: Vec<MetricScore> = systems
            .iter()
            .zip(overall)
            .map(|((id, _), o)| MetricScore::new(*id, "m", f64::from(o as i32) * 0.1))
            .chain([MetricScore::missing("a1", "n", "no reference")])
            .collect();
        let table = ScoreTable::from_dataset(&ds, &scores, TableOptions::default()).unwrap();
        assert_eq!(table.len(), 6);
        let turn = turn_level(&table, "m", Quality::Overall).unwrap();
        assert_eq!(turn.n, 6);
        assert!(close(turn.spearman, 1.0, 1e-12) && close(turn.pearson, 1.0, 1e-12));
        let sys = system_level(&table, "m", Quality::Overall).unwrap();
        assert_eq!(sys.n, 3);
        assert!(close(sys.spearman, 1.0, 1e-12));

        let with_gt = ScoreTable::from_dataset(
            &ds,
            &scores,
            TableOptions {
                include_ground_truth: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(turn_level(&with_gt, "m", Quality::Overall).unwrap().n, 7);

        // Missing metric: no pairs at all.
        assert!(turn_level(&table, "n", Quality::Overall).is_err());
    }

    #[test]
    fn system_level_needs_three_systems() {
        let systems = [("a1", "A"), ("a2", "A"), ("b1", "B"), ("b2", "B")];
        let rows: Vec<(&str, &str, [i64; 6])> = systems
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (*id, "x", [1, 2, 2, 2, 1, i as i64 + 1]))
            .collect();
        let ds = dataset(&rows, &systems);
        let scores: Vec<MetricScore> = systems
            .iter()
            .enumerate()
            .map(|(i, (id, _))| MetricScore::new(*id, "m", i as f64))
            .collect();
        let table = ScoreTable::from_dataset(&ds, &scores, TableOptions::default()).unwrap();
        assert_eq!(
            system_level(&table, "m", Quality::Overall).unwrap_err(),
            Error::InsufficientSystems(2)
        );
    }

    #[test]
    fn duplicate_and_unknown_scores_rejected() {
        let systems = [("a1", "A")];
        let ds = dataset(&[("a1", "x", [1, 2, 2, 2, 1, 3])], &systems);
        let dup = [
            MetricScore::new("a1", "m", 1.0),
            MetricScore::new("a1", "m", 2.0),
        ];
        assert!(matches!(
            ScoreTable::from_dataset(&ds, &dup, TableOptions::default()),
            Err(Error::Integrity(_))
        ));
        let unknown = [MetricScore::new("zz", "m", 1.0)];
        assert!(matches!(
            ScoreTable::from_dataset(&ds, &unknown, TableOptions::default()),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn median_aggregation() {
        assert_eq!(
            HumanAggregation::Median.apply(&mut [3.0, 1.0, 2.0]),
            Some(2.0)
        );
        assert_eq!(
            HumanAggregation::Median.apply(&mut [4.0, 1.0, 2.0, 3.0]),
            Some(2.5)
        );
        assert_eq!(HumanAggregation::Mean.apply(&mut []), None);
    }
}
