//! Token sequences and the text normalizer shared by every metric.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Version tag of [`normalize_tokens`]. Bump whenever tokenization changes,
/// since word-overlap scores depend on it.
pub const TOKENIZER_VERSION: &str = "lower-punct-split/1";

/// An ordered list of lowercase tokens, none of which contains whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    /// Wraps already-tokenized input, rejecting empty tokens and tokens that
    /// contain whitespace.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::Argument(alloc::format!(
                "token {bad:?} is empty or contains whitespace"
            )));
        }
        Ok(Self(tokens))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    /// Concatenates several sequences in order.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a TokenSequence>) -> Self {
        Self(
            parts
                .into_iter()
                .flat_map(|p| p.0.iter().cloned())
                .collect(),
        )
    }

    /// Tokens joined by single spaces. Normalizing the result yields `self`
    /// again for any sequence produced by [`normalize_tokens`].
    pub fn to_text(&self) -> String {
        self.0.join(" ")
    }

    pub(crate) fn push(&mut self, token: String) {
        self.0.push(token);
    }
}

impl Deref for TokenSequence {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl TryFrom<Vec<String>> for TokenSequence {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::new(tokens)
    }
}

impl From<TokenSequence> for Vec<String> {
    fn from(seq: TokenSequence) -> Self {
        seq.0
    }
}

impl From<&str> for TokenSequence {
    fn from(text: &str) -> Self {
        normalize_tokens(text)
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Lowercases `text` and splits it into tokens.
///
/// Runs of alphanumeric characters form words. Whitespace separates tokens.
/// Every other character (punctuation, symbols, combining marks) becomes a
/// token of its own, so `"don't"` yields `don ' t`.
pub fn normalize_tokens(text: &str) -> TokenSequence {
    let lowered = text.to_lowercase();
    let mut out = TokenSequence::empty();
    let mut word = String::new();
    for ch in lowered.chars() {
        if ch.is_alphanumeric() {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            out.push(core::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}
