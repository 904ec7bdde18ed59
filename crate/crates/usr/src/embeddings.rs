//! Static word-embedding files: one `token v1 ... vd` line per token,
//! whitespace separated. A leading `count dim` header line (word2vec text
//! format) is skipped.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use usr_core::embedding::{OovPolicy, StaticEmbeddings};

use crate::error::{EvalError, Result};

pub fn load_embeddings(path: &Path, oov: OovPolicy) -> Result<StaticEmbeddings> {
    let file = File::open(path).map_err(|e| EvalError::io(path, e))?;
    parse_embeddings(BufReader::new(file), path, oov)
}

pub fn parse_embeddings(
    reader: impl BufRead,
    path: &Path,
    oov: OovPolicy,
) -> Result<StaticEmbeddings> {
    let mut table: Option<StaticEmbeddings> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EvalError::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if i == 0
            && values.len() == 1
            && token.parse::<usize>().is_ok()
            && values[0].parse::<usize>().is_ok()
        {
            continue;
        }
        let vector = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| EvalError::parse(path, i + 1, format!("bad component: {e}")))?;
        if vector.is_empty() {
            return Err(EvalError::parse(
                path,
                i + 1,
                format!("token `{token}` has no vector"),
            ));
        }
        let t =
            table.get_or_insert_with(|| StaticEmbeddings::new(vector.len()).with_oov_policy(oov));
        t.insert(token.to_lowercase(), vector)
            .map_err(|e| EvalError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                source: e,
            })?;
    }
    table.ok_or_else(|| EvalError::Data(format!("{}: no embeddings found", path.display())))
}
