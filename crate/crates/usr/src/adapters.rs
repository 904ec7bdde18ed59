//! Read-only importers: the released quality-annotation files, raw
//! Topical-Chat conversations and ConvAI2-style PersonaChat dialogs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;
use usr_core::corpus::{
    AnnotatedDataset, Dialog, DialogContext, DialogCorpus, DialogExample, Fact, Quality,
    QualityAnnotation,
};
use usr_core::{normalize_tokens, TokenSequence, GROUND_TRUTH_SYSTEM};

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Release {
    TopicalChat,
    PersonaChat,
}

impl Release {
    fn prefix(self) -> &'static str {
        match self {
            Release::TopicalChat => "tc",
            Release::PersonaChat => "pc",
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| EvalError::io(path, e))
}

fn parse_json(path: &Path, text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| EvalError::parse(path, e.line(), e))
}

/// Lowercase alphanumeric runs joined by `-`: "Nucleus Decoding (p = 0.5)"
/// becomes "nucleus-decoding-p-0-5".
pub fn slug(name: &str) -> String {
    name.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("-")
}

fn is_ground_truth_model(model: &str) -> bool {
    slug(model).contains("ground-truth")
}

fn context_turns(v: &Value) -> Option<Vec<TokenSequence>> {
    let turns: Vec<TokenSequence> = match v {
        Value::String(s) => s.lines().map(normalize_tokens).collect(),
        Value::Array(items) => items
            .iter()
            .map(|t| t.as_str().map(normalize_tokens))
            .collect::<Option<_>>()?,
        _ => return None,
    };
    Some(turns.into_iter().filter(|t| !t.is_empty()).collect())
}

fn rating_list(v: &Value) -> Option<Vec<i64>> {
    let as_int = |x: &Value| -> Option<i64> {
        let f = x.as_f64()?;
        (f.fract() == 0.0).then_some(f as i64)
    };
    match v {
        Value::Array(items) => items.iter().map(as_int).collect(),
        other => as_int(other).map(|r| vec![r]),
    }
}

/// Loads a released annotation file: a JSON array of contexts, each with a
/// `context` (newline-separated turns), a `fact` and a list of `responses`
/// carrying the source `model`, the response text and one list of ratings
/// per quality. Ratings are positional, so annotators are named `a1`, `a2`,
/// ... by list position. Every response's reference is the ground-truth
/// response of the same context; the ground-truth response itself gets
/// system id [`GROUND_TRUTH_SYSTEM`] and no reference.
pub fn load_usr_release(path: &Path, release: Release) -> Result<AnnotatedDataset> {
    let root = parse_json(path, &read(path)?)?;
    let contexts = root.as_array().ok_or_else(|| {
        EvalError::Data(format!(
            "{}: expected a JSON array of contexts",
            path.display()
        ))
    })?;
    let mut examples = Vec::new();
    let mut annotations = Vec::new();
    let bad = |ci: usize, what: &str| {
        EvalError::Data(format!("{}: context #{ci}: {what}", path.display()))
    };

    for (ci, item) in contexts.iter().enumerate() {
        let turns = item
            .get("context")
            .and_then(context_turns)
            .ok_or_else(|| bad(ci, "missing or malformed `context`"))?;
        let context = DialogContext::new(turns).map_err(|_| bad(ci, "empty `context`"))?;
        let fact = Fact(
            item.get("fact")
                .and_then(Value::as_str)
                .map(normalize_tokens)
                .unwrap_or_default(),
        );
        let responses = item
            .get("responses")
            .and_then(Value::as_array)
            .ok_or_else(|| bad(ci, "missing `responses` list"))?;

        let reference = responses
            .iter()
            .find(|r| {
                r.get("model")
                    .and_then(Value::as_str)
                    .is_some_and(is_ground_truth_model)
            })
            .and_then(|r| r.get("response").and_then(Value::as_str))
            .map(normalize_tokens);

        let mut seen_ids = BTreeMap::new();
        for resp in responses {
            let model = resp
                .get("model")
                .and_then(Value::as_str)
                .ok_or_else(|| bad(ci, "response without `model`"))?;
            let text = resp
                .get("response")
                .and_then(Value::as_str)
                .ok_or_else(|| bad(ci, &format!("`{model}` has no `response` text")))?;
            let gt = is_ground_truth_model(model);
            let system_id = if gt {
                GROUND_TRUTH_SYSTEM.to_string()
            } else {
                slug(model)
            };
            let mut example_id = format!("{}-{ci:03}-{}", release.prefix(), slug(model));
            let dup = seen_ids.entry(example_id.clone()).or_insert(0usize);
            *dup += 1;
            if *dup > 1 {
                example_id = format!("{example_id}-{dup}");
            }

            let mut ratings: BTreeMap<Quality, Vec<i64>> = BTreeMap::new();
            if let Some(obj) = resp.as_object() {
                for (key, value) in obj {
                    if matches!(key.as_str(), "model" | "response") {
                        continue;
                    }
                    if let Some(q) = Quality::parse(key) {
                        let list = rating_list(value).ok_or_else(|| {
                            bad(
                                ci,
                                &format!("`{model}`: ratings for `{key}` are not integers"),
                            )
                        })?;
                        ratings.insert(q, list);
                    }
                }
            }
            if !ratings.is_empty() {
                if let Some(q) = Quality::ALL.into_iter().find(|q| !ratings.contains_key(q)) {
                    return Err(bad(ci, &format!("`{model}` lacks `{}` ratings", q.label())));
                }
                let n = ratings[&Quality::Overall].len();
                if ratings.values().any(|l| l.len() != n) {
                    return Err(bad(
                        ci,
                        &format!("`{model}` has rating lists of different lengths"),
                    ));
                }
                #[allow(clippy::needless_range_loop)]
                for k in 0..n {
                    let row = Quality::ALL.map(|q| ratings[&q][k]);
                    let ann = QualityAnnotation::from_ratings(
                        example_id.as_str(),
                        format!("a{}", k + 1),
                        row,
                    )
                    .map_err(|e| bad(ci, &format!("`{model}`, annotator {}: {e}", k + 1)))?;
                    annotations.push(ann);
                }
            }

            examples.push(DialogExample {
                example_id,
                context: context.clone(),
                fact: fact.clone(),
                response: normalize_tokens(text),
                reference: if gt { None } else { reference.clone() },
                system_id,
            });
        }
    }
    Ok(AnnotatedDataset::new(examples, annotations)?)
}

/// Raw Topical-Chat conversations: an object keyed by conversation id whose
/// values carry a `content` list of `{"message": ..., "agent": ...}` turns.
/// Knowledge lives in separate reading-set files, so facts are left empty.
pub fn load_topical_chat_conversations(path: &Path) -> Result<DialogCorpus> {
    let root = parse_json(path, &read(path)?)?;
    let convs = root.as_object().ok_or_else(|| {
        EvalError::Data(format!(
            "{}: expected an object keyed by conversation id",
            path.display()
        ))
    })?;
    let mut dialogs = Vec::with_capacity(convs.len());
    for (id, conv) in convs {
        let content = conv
            .get("content")
            .and_then(Value::as_array)
            .ok_or_else(|| {
                EvalError::Data(format!(
                    "{}: conversation `{id}` has no `content`",
                    path.display()
                ))
            })?;
        let turns = content
            .iter()
            .filter_map(|t| t.get("message").and_then(Value::as_str))
            .map(normalize_tokens)
            .filter(|t| !t.is_empty())
            .collect();
        dialogs.push(Dialog {
            dialog_id: id.clone(),
            turns,
            fact: Fact::default(),
        });
    }
    Ok(DialogCorpus::new(dialogs))
}

/// ConvAI2 text format: numbered lines restarting at 1 for each dialog,
/// `your persona:` lines forming the fact and other lines holding
/// `utterance<TAB>response[<TAB><TAB>candidates]`.
pub fn load_convai2(path: &Path) -> Result<DialogCorpus> {
    let text = read(path)?;
    let mut dialogs: Vec<Dialog> = Vec::new();
    let mut persona: Vec<String> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (num, rest) = line
            .split_once(' ')
            .and_then(|(n, r)| n.parse::<usize>().ok().map(|n| (n, r)))
            .ok_or_else(|| {
                EvalError::parse(path, i + 1, "line does not start with a turn number")
            })?;
        if num == 1 || dialogs.is_empty() {
            dialogs.push(Dialog {
                dialog_id: format!("convai2-{:05}", dialogs.len()),
                turns: Vec::new(),
                fact: Fact::default(),
            });
            persona.clear();
        }
        let dialog = dialogs.last_mut().expect("pushed above");
        if let Some(p) = rest.strip_prefix("your persona:") {
            persona.push(p.trim().to_string());
            dialog.fact = Fact(normalize_tokens(&persona.join(" ")));
        } else if rest.starts_with("partner's persona:") {
            continue;
        } else {
            let mut fields = rest.split('\t');
            for utterance in fields.by_ref().take(2) {
                let toks = normalize_tokens(utterance);
                if !toks.is_empty() {
                    dialog.turns.push(toks);
                }
            }
        }
    }
    Ok(DialogCorpus::new(dialogs))
}

/// Dialog corpus of an annotated dataset: context followed by the response,
/// taken from ground-truth examples when the dataset has any, otherwise
/// from every example.
pub fn corpus_from_dataset(ds: &AnnotatedDataset) -> DialogCorpus {
    let has_gt = ds.examples().iter().any(DialogExample::is_ground_truth);
    DialogCorpus::from_examples(
        ds.examples()
            .iter()
            .filter(|e| !has_gt || e.is_ground_truth()),
    )
}
