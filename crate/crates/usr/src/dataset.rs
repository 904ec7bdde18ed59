//! The canonical JSON Lines dataset format and format dispatch.
//!
//! Each line is one object tagged by `kind`:
//!
//! ```text
//! {"kind":"example","example_id":"tc-001-argmax","context":["hi there","hello"],"fact":"...","response":"...","reference":"...","system_id":"argmax"}
//! {"kind":"annotation","example_id":"tc-001-argmax","annotator_id":"a1","understandable":1,"natural":3,"maintains_context":3,"interesting":2,"uses_knowledge":1,"overall":4}
//! ```
//!
//! Text fields are raw strings; they are tokenized with
//! [`usr_core::normalize_tokens`] on load and written back as space-joined
//! tokens, so a saved dataset reloads unchanged.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use usr_core::corpus::{AnnotatedDataset, DialogContext, DialogExample, Fact, QualityAnnotation};
use usr_core::{normalize_tokens, TokenSequence};

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    #[default]
    CanonicalJsonl,
    /// Released Topical-Chat quality annotations (JSON array of contexts).
    TopicalChat,
    /// Released PersonaChat quality annotations.
    PersonaChat,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Example(ExampleRecord),
    Annotation(AnnotationRecord),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleRecord {
    example_id: String,
    context: Vec<String>,
    #[serde(default)]
    fact: String,
    response: String,
    #[serde(default)]
    reference: Option<String>,
    system_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speakers: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    example_id: String,
    annotator_id: String,
    understandable: i64,
    natural: i64,
    maintains_context: i64,
    interesting: i64,
    uses_knowledge: i64,
    overall: i64,
}

impl ExampleRecord {
    fn into_example(self) -> usr_core::Result<DialogExample> {
        let turns: Vec<TokenSequence> = self.context.iter().map(|t| normalize_tokens(t)).collect();
        let context = match self.speakers {
            Some(s) => DialogContext::with_speakers(turns, s)?,
            None => DialogContext::new(turns)?,
        };
        Ok(DialogExample {
            example_id: self.example_id,
            context,
            fact: Fact(normalize_tokens(&self.fact)),
            response: normalize_tokens(&self.response),
            reference: self.reference.as_deref().map(normalize_tokens),
            system_id: self.system_id,
        })
    }

    fn from_example(ex: &DialogExample) -> Self {
        Self {
            example_id: ex.example_id.clone(),
            context: ex
                .context
                .turns()
                .iter()
                .map(TokenSequence::to_text)
                .collect(),
            fact: ex.fact.0.to_text(),
            response: ex.response.to_text(),
            reference: ex.reference.as_ref().map(TokenSequence::to_text),
            system_id: ex.system_id.clone(),
            speakers: ex.context.speaker_tags().map(<[String]>::to_vec),
        }
    }
}

impl AnnotationRecord {
    fn into_annotation(self) -> usr_core::Result<QualityAnnotation> {
        QualityAnnotation::from_ratings(
            self.example_id,
            self.annotator_id,
            [
                self.understandable,
                self.natural,
                self.maintains_context,
                self.interesting,
                self.uses_knowledge,
                self.overall,
            ],
        )
    }

    fn from_annotation(a: &QualityAnnotation) -> Self {
        Self {
            example_id: a.example_id.clone(),
            annotator_id: a.annotator_id.clone(),
            understandable: a.understandable.into(),
            natural: a.natural.into(),
            maintains_context: a.maintains_context.into(),
            interesting: a.interesting.into(),
            uses_knowledge: a.uses_knowledge.into(),
            overall: a.overall.into(),
        }
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<AnnotatedDataset> {
    match format {
        DatasetFormat::CanonicalJsonl => load_jsonl(path),
        DatasetFormat::TopicalChat => {
            crate::adapters::load_usr_release(path, crate::adapters::Release::TopicalChat)
        }
        DatasetFormat::PersonaChat => {
            crate::adapters::load_usr_release(path, crate::adapters::Release::PersonaChat)
        }
    }
}

pub fn load_jsonl(path: &Path) -> Result<AnnotatedDataset> {
    let file = fs::File::open(path).map_err(|e| EvalError::io(path, e))?;
    parse_jsonl(BufReader::new(file), path)
}

/// Parses canonical JSONL from any reader; `path` is used in messages only.
pub fn parse_jsonl(reader: impl BufRead, path: &Path) -> Result<AnnotatedDataset> {
    let mut examples = Vec::new();
    let mut annotations = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| EvalError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| EvalError::parse(path, line_no, e))?;
        let converted = match record {
            Record::Example(r) => r.into_example().map(|ex| examples.push(ex)),
            Record::Annotation(r) => r.into_annotation().map(|a| annotations.push(a)),
        };
        converted.map_err(|e| EvalError::Record {
            path: path.to_path_buf(),
            line: line_no,
            source: e,
        })?;
    }
    Ok(AnnotatedDataset::new(examples, annotations)?)
}

/// Adds the annotation records of a separate JSONL file to `ds`.
pub fn attach_annotations(ds: &AnnotatedDataset, path: &Path) -> Result<AnnotatedDataset> {
    let file = fs::File::open(path).map_err(|e| EvalError::io(path, e))?;
    let mut annotations = ds.annotations().to_vec();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EvalError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line).map_err(|e| EvalError::parse(path, i + 1, e))? {
            Record::Annotation(r) => {
                annotations.push(r.into_annotation().map_err(|e| EvalError::Record {
                    path: path.to_path_buf(),
                    line: i + 1,
                    source: e,
                })?)
            }
            Record::Example(_) => {
                return Err(EvalError::parse(
                    path,
                    i + 1,
                    "expected only annotation records",
                ))
            }
        }
    }
    Ok(AnnotatedDataset::new(ds.examples().to_vec(), annotations)?)
}

/// Examples first, then annotations, each in dataset order.
pub fn to_jsonl_lines(ds: &AnnotatedDataset) -> Vec<String> {
    let examples = ds
        .examples()
        .iter()
        .map(|ex| Record::Example(ExampleRecord::from_example(ex)));
    let annotations = ds
        .annotations()
        .iter()
        .map(|a| Record::Annotation(AnnotationRecord::from_annotation(a)));
    examples
        .chain(annotations)
        .map(|r| serde_json::to_string(&r).expect("records serialize"))
        .collect()
}

pub fn save_jsonl(ds: &AnnotatedDataset, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for line in to_jsonl_lines(ds) {
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| EvalError::io(path, e))?;
    f.write_all(&out).map_err(|e| EvalError::io(path, e))
}
