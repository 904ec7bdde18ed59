//! Append-only score files.
//!
//! JSON Lines: a `header` record naming the run configuration, then one
//! `score` record per (example, metric). Reopening a file for the same
//! configuration resumes it: keys already present are skipped and a torn
//! final line left by an interrupted write is dropped.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use usr_core::stats::MetricScore;

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreHeader {
    pub config_hash: String,
    pub seed: u64,
    pub tokenizer: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(ScoreHeader),
    Score(MetricScore),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreFile {
    pub header: Option<ScoreHeader>,
    pub scores: Vec<MetricScore>,
}

fn parse_lines(path: &Path, text: &str) -> Result<ScoreFile> {
    let mut out = ScoreFile::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line).map_err(|e| EvalError::parse(path, i + 1, e))? {
            Line::Header(h) if out.header.is_none() && out.scores.is_empty() => {
                out.header = Some(h)
            }
            Line::Header(_) => {
                return Err(EvalError::parse(
                    path,
                    i + 1,
                    "header record must come first",
                ))
            }
            Line::Score(s) => out.scores.push(s),
        }
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<ScoreFile> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    parse_lines(path, &text)
}

fn to_line(line: &Line) -> String {
    let mut s = serde_json::to_string(line).expect("score records serialize");
    s.push('\n');
    s
}

pub struct ScoreWriter {
    path: PathBuf,
    file: File,
    done: HashSet<(String, String)>,
}

impl ScoreWriter {
    /// Creates `path` with `header`, or resumes it when it already holds a
    /// run with the same configuration hash.
    pub fn open(path: &Path, header: &ScoreHeader) -> Result<Self> {
        let mut done = HashSet::new();
        if path.exists() {
            let mut text = fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
            if !text.is_empty() && !text.ends_with('\n') {
                let keep = text.rfind('\n').map_or(0, |i| i + 1);
                log::warn!("{}: dropping torn final line", path.display());
                text.truncate(keep);
                fs::write(path, &text).map_err(|e| EvalError::io(path, e))?;
            }
            let existing = parse_lines(path, &text)?;
            match &existing.header {
                Some(h) if h == header => {}
                Some(h) => {
                    return Err(EvalError::Config(format!(
                        "{} was written by configuration {} (seed {}); this run is {}. Use a fresh output directory",
                        path.display(),
                        h.config_hash,
                        h.seed,
                        header.config_hash
                    )))
                }
                None if text.trim().is_empty() => {
                    fs::write(path, to_line(&Line::Header(header.clone()))).map_err(|e| EvalError::io(path, e))?;
                }
                None => return Err(EvalError::Data(format!("{} has no header record", path.display()))),
            }
            done = existing
                .scores
                .into_iter()
                .map(|s| (s.example_id, s.metric))
                .collect();
        } else {
            fs::write(path, to_line(&Line::Header(header.clone())))
                .map_err(|e| EvalError::io(path, e))?;
        }
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| EvalError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            done,
        })
    }

    pub fn is_done(&self, example_id: &str, metric: &str) -> bool {
        self.done
            .contains(&(example_id.to_string(), metric.to_string()))
    }

    pub fn done_count(&self) -> usize {
        self.done.len()
    }

    /// Appends the scores not already present, in order.
    pub fn append(&mut self, scores: &[MetricScore]) -> Result<usize> {
        let mut buf = String::new();
        let mut n = 0;
        for s in scores {
            if self.done.insert((s.example_id.clone(), s.metric.clone())) {
                buf.push_str(&to_line(&Line::Score(s.clone())));
                n += 1;
            }
        }
        self.file
            .write_all(buf.as_bytes())
            .map_err(|e| EvalError::io(&self.path, e))?;
        self.file
            .flush()
            .map_err(|e| EvalError::io(&self.path, e))?;
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(hash: &str) -> ScoreHeader {
        ScoreHeader {
            config_hash: hash.into(),
            seed: 7,
            tokenizer: usr_core::tokens::TOKENIZER_VERSION.into(),
        }
    }

    #[test]
    fn resume_skips_existing_and_repairs_torn_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        let mut w = ScoreWriter::open(&path, &header("h")).unwrap();
        assert_eq!(
            w.append(&[
                MetricScore::new("e1", "f1", 0.5),
                MetricScore::missing("e2", "f1", "no reference")
            ])
            .unwrap(),
            2
        );
        drop(w);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"kind\":\"score\",\"exam");
        fs::write(&path, text).unwrap();

        let mut w = ScoreWriter::open(&path, &header("h")).unwrap();
        assert!(w.is_done("e1", "f1") && !w.is_done("e1", "bleu-1"));
        assert_eq!(
            w.append(&[
                MetricScore::new("e1", "f1", 0.9),
                MetricScore::new("e1", "bleu-1", 0.1)
            ])
            .unwrap(),
            1
        );
        let f = read_scores(&path).unwrap();
        assert_eq!(f.header, Some(header("h")));
        assert_eq!(f.scores.len(), 3);
        assert_eq!(f.scores[0].value, Some(0.5));
        assert_eq!(f.scores[1].value, None);
    }

    #[test]
    fn refuses_to_mix_configurations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        ScoreWriter::open(&path, &header("a")).unwrap();
        assert!(matches!(
            ScoreWriter::open(&path, &header("b")),
            Err(EvalError::Config(_))
        ));
    }
}
