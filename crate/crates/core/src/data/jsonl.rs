use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;

use super::{Corpus, Document, HashingVectorizer, Provenance};
use crate::error::{Error, Result};

/// One line of a JSONL corpus: `{"id": "...", "text": "...", "label": 0}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub label: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct JsonlSchema {
    pub n_classes: usize,
    pub vectorizer: HashingVectorizer,
}

/// Parses JSONL text. Blank lines are skipped; every malformed line is
/// reported with its 1-based line number.
pub fn parse_jsonl(text: &str, n_classes: usize) -> std::result::Result<Vec<TextRecord>, String> {
    let mut records = Vec::new();
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TextRecord>(line) {
            Ok(rec) => {
                if let Some(label) = rec.label {
                    if label < 0 || label as usize >= n_classes {
                        problems.push(format!("line {n}: label {label} outside [0, {n_classes})"));
                        continue;
                    }
                }
                if !seen.insert(rec.id.clone()) {
                    problems.push(format!("line {n}: duplicate id {:?}", rec.id));
                    continue;
                }
                records.push(rec);
            }
            Err(e) => problems.push(format!("line {n}: {e}")),
        }
    }
    if problems.is_empty() {
        Ok(records)
    } else {
        Err(problems.join("; "))
    }
}

pub fn load_jsonl(path: &Path, schema: &JsonlSchema) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_jsonl(&text, schema.n_classes).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })?;
    let documents = records
        .into_iter()
        .map(|r| Document {
            features: schema.vectorizer.transform(&r.text),
            id: r.id,
            label: r.label.map(|l| l as usize),
        })
        .collect();
    Ok(Corpus {
        documents,
        n_classes: schema.n_classes,
        feature_dim: schema.vectorizer.dim(),
        provenance: Provenance::File {
            path: path.display().to_string(),
        },
    })
}
