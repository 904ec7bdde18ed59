//! Correlation and agreement reports as text tables, Markdown or JSON.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use usr_core::corpus::Quality;
use usr_core::stats::{Agreement, CorrelationReport, Level, SIGNIFICANCE_LEVEL};

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    TextTable,
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::TextTable => "txt",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

/// `Compact` lists only metrics that have reports; `Catalogue` always lists
/// the full metric catalogue and fills the gaps with `n/a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    #[default]
    Compact,
    Catalogue,
}

/// Metric rows of the full table, grouped by family.
pub const CATALOGUE: [(&str, Family); 17] = [
    ("f1", Family::WordOverlap),
    ("bleu-1", Family::WordOverlap),
    ("bleu-2", Family::WordOverlap),
    ("bleu-3", Family::WordOverlap),
    ("bleu-4", Family::WordOverlap),
    ("meteor", Family::WordOverlap),
    ("rouge-l", Family::WordOverlap),
    ("greedy-matching", Family::Embedding),
    ("embedding-average", Family::Embedding),
    ("vector-extrema", Family::Embedding),
    ("skip-thought", Family::Embedding),
    ("bertscore", Family::Embedding),
    ("bertscore-large", Family::Embedding),
    ("usr-mlm", Family::Usr),
    ("usr-dr-c", Family::Usr),
    ("usr-dr-f", Family::Usr),
    ("usr", Family::Usr),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Family {
    WordOverlap,
    Embedding,
    Usr,
    Other,
}

pub fn family(metric: &str) -> Family {
    CATALOGUE
        .iter()
        .find(|(m, _)| *m == metric)
        .map_or(Family::Other, |(_, f)| *f)
}

/// Family first, then catalogue position, then name for metrics outside it.
fn sort_key(metric: &str) -> (Family, usize, String) {
    let pos = CATALOGUE
        .iter()
        .position(|(m, _)| *m == metric)
        .unwrap_or(usize::MAX);
    (family(metric), pos, metric.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(flatten)]
    pub report: CorrelationReport,
    #[serde(default)]
    pub spearman_not_significant: bool,
    #[serde(default)]
    pub pearson_not_significant: bool,
}

/// Everything a benchmark run reports, plus the run identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub config_hash: String,
    pub seed: u64,
    pub reports: Vec<ReportRow>,
    #[serde(default)]
    pub agreement: Vec<Agreement>,
}

impl ReportDocument {
    pub fn new(
        config_hash: &str,
        seed: u64,
        reports: &[CorrelationReport],
        agreement: &[Agreement],
    ) -> Self {
        let mut reports: Vec<ReportRow> = reports
            .iter()
            .map(|r| ReportRow {
                report: r.clone(),
                spearman_not_significant: !r.spearman_significant(),
                pearson_not_significant: !r.pearson_significant(),
            })
            .collect();
        reports.sort_by(|a, b| {
            let (a, b) = (&a.report, &b.report);
            (a.quality, sort_key(&a.metric), a.level).cmp(&(
                b.quality,
                sort_key(&b.metric),
                b.level,
            ))
        });
        let mut agreement = agreement.to_vec();
        agreement.sort_by_key(|a| a.quality);
        Self {
            config_hash: config_hash.into(),
            seed,
            reports,
            agreement,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| EvalError::Data(format!("not a JSON report: {e}")))
    }

    pub fn render(&self, format: ReportFormat, layout: Layout) -> String {
        match format {
            ReportFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
                s.push('\n');
                s
            }
            ReportFormat::TextTable | ReportFormat::Markdown => self.render_tables(format, layout),
        }
    }

    fn render_tables(&self, format: ReportFormat, layout: Layout) -> String {
        let mut qualities: Vec<Quality> = self.reports.iter().map(|r| r.report.quality).collect();
        qualities.dedup();
        if qualities.is_empty() && (layout == Layout::Catalogue || self.agreement.is_empty()) {
            qualities.push(Quality::Overall);
        }
        let md = format == ReportFormat::Markdown;
        let mut out = String::new();
        for q in qualities {
            let rows = self.rows_for(q, layout);
            let title = format!("{} correlations", q.label());
            let header = [
                "Metric",
                "Turn Spearman",
                "Turn Pearson",
                "System Spearman",
                "System Pearson",
            ];
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|(metric, turn, system)| {
                    let mut cells = vec![metric.to_string()];
                    for r in [turn, system] {
                        match r {
                            Some(r) => {
                                cells.push(cell(r.report.spearman, r.spearman_not_significant, md));
                                cells.push(cell(r.report.pearson, r.pearson_not_significant, md));
                            }
                            None => cells.extend(["n/a".to_string(), "n/a".to_string()]),
                        }
                    }
                    cells
                })
                .collect();
            table(&mut out, &title, &header, &body, md);
        }
        if !self.agreement.is_empty() {
            let body: Vec<Vec<String>> = self
                .agreement
                .iter()
                .map(|a| {
                    vec![
                        a.quality.label().to_string(),
                        fixed(a.spearman),
                        fixed(a.pearson),
                        a.pairs.to_string(),
                    ]
                })
                .collect();
            table(
                &mut out,
                "Inter-annotator agreement",
                &["Quality", "Spearman", "Pearson", "Pairs"],
                &body,
                md,
            );
        }
        if md {
            let _ = writeln!(out, "Italic values have p > {SIGNIFICANCE_LEVEL}.\n");
        } else {
            let _ = writeln!(out, "* p > {SIGNIFICANCE_LEVEL}\n");
        }
        let _ = writeln!(out, "config {} seed {}", self.config_hash, self.seed);
        out
    }

    #[allow(clippy::type_complexity)]
    fn rows_for(
        &self,
        q: Quality,
        layout: Layout,
    ) -> Vec<(String, Option<&ReportRow>, Option<&ReportRow>)> {
        let mut metrics: Vec<String> = match layout {
            Layout::Catalogue => CATALOGUE.iter().map(|(m, _)| m.to_string()).collect(),
            Layout::Compact => Vec::new(),
        };
        for r in self.reports.iter().filter(|r| r.report.quality == q) {
            if !metrics.contains(&r.report.metric) {
                metrics.push(r.report.metric.clone());
            }
        }
        metrics.sort_by_key(|m| sort_key(m));
        let find = |m: &str, level: Level| {
            self.reports
                .iter()
                .find(|r| r.report.quality == q && r.report.metric == m && r.report.level == level)
        };
        metrics
            .into_iter()
            .map(|m| {
                let (t, s) = (find(&m, Level::Turn), find(&m, Level::System));
                (m, t, s)
            })
            .collect()
    }
}

fn fixed(v: f64) -> String {
    format!("{v:.4}")
}

fn cell(v: f64, not_significant: bool, md: bool) -> String {
    match (not_significant, md) {
        (false, _) => fixed(v),
        (true, true) => format!("*{}*", fixed(v)),
        (true, false) => format!("{}*", fixed(v)),
    }
}

fn table(out: &mut String, title: &str, header: &[&str], rows: &[Vec<String>], md: bool) {
    if md {
        let _ = writeln!(out, "### {title}\n");
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        for r in rows {
            let _ = writeln!(out, "| {} |", r.join(" | "));
        }
        out.push('\n');
        return;
    }
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let mut s: String = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect::<Vec<_>>()
            .join("  ");
        s.truncate(s.trim_end().len());
        s
    };
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{}", line(header.to_vec()));
    let _ = writeln!(
        out,
        "{}",
        "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))
    );
    for r in rows {
        let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
    }
    out.push('\n');
}
