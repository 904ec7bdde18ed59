//! SHA-256 fingerprints of datasets, corpora and run configurations.

use serde::Serialize;
use sha2::{Digest, Sha256};
use usr_core::corpus::{AnnotatedDataset, DialogCorpus};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON encoding of `value`.
pub fn of_json<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("in-memory values serialize");
    sha256_hex(&bytes)
}

pub fn dataset(ds: &AnnotatedDataset) -> String {
    let mut h = Sha256::new();
    for line in crate::dataset::to_jsonl_lines(ds) {
        h.update(line.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Covers dialog ids, turns and facts.
pub fn corpus(corpus: &DialogCorpus) -> String {
    let mut h = Sha256::new();
    for d in &corpus.dialogs {
        h.update(d.dialog_id.as_bytes());
        h.update([0xff]);
        for t in &d.turns {
            h.update(t.to_text().as_bytes());
            h.update([0xfe]);
        }
        h.update(d.fact.0.to_text().as_bytes());
        h.update([0xfd]);
    }
    hex::encode(h.finalize())
}
