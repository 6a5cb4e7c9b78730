//! Corpora, featurization, synthetic benchmarks and splitting.

mod hashing;
mod jsonl;
mod split;
mod synth;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::hex;
use crate::error::{Error, Result};

pub use hashing::{featurize_hashed_bow, fnv1a64, HashingVectorizer, DEFAULT_HASH_DIM, DEFAULT_TOKEN_PATTERN};
pub use jsonl::{load_jsonl, parse_jsonl, JsonlSchema, TextRecord};
pub use split::{inject_label_noise, stratified_split, Split};
pub use synth::{inject_distractors, synth, DistractorSpec, Generator, SynthSpec};

/// A labeled or unlabeled document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

impl Document {
    pub fn new(id: impl Into<String>, features: Vec<f64>, label: Option<usize>) -> Self {
        Document {
            id: id.into(),
            features,
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    File { path: String },
    Synthetic { spec: SynthSpec },
    Derived { note: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub n_classes: usize,
    pub feature_dim: usize,
    pub provenance: Provenance,
}

impl Corpus {
    /// Checks unique ids, feature lengths and label ranges.
    pub fn validate(&self) -> Result<()> {
        validate_documents(&self.documents, self.n_classes, self.feature_dim)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Count of documents per gold class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for label in self.documents.iter().filter_map(|d| d.label) {
            counts[label] += 1;
        }
        counts
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.documents)
    }
}

pub(crate) fn validate_documents(docs: &[Document], n_classes: usize, dim: usize) -> Result<()> {
    let mut seen = HashSet::with_capacity(docs.len());
    for doc in docs {
        if !seen.insert(doc.id.as_str()) {
            return Err(Error::Validation(format!("duplicate document id {:?}", doc.id)));
        }
        if doc.features.len() != dim {
            return Err(Error::Validation(format!(
                "document {:?} has {} features, expected {dim}",
                doc.id,
                doc.features.len()
            )));
        }
        if let Some(label) = doc.label {
            if label >= n_classes {
                return Err(Error::Validation(format!(
                    "document {:?} has label {label} outside [0, {n_classes})",
                    doc.id
                )));
            }
        }
    }
    Ok(())
}

/// SHA-256 over ids, feature bits and labels, in order.
pub fn fingerprint(docs: &[Document]) -> String {
    let mut hasher = Sha256::new();
    for doc in docs {
        hasher.update((doc.id.len() as u64).to_le_bytes());
        hasher.update(doc.id.as_bytes());
        for x in &doc.features {
            hasher.update(x.to_bits().to_le_bytes());
        }
        hasher.update(doc.label.map_or(u64::MAX, |l| l as u64).to_le_bytes());
    }
    hex(&hasher.finalize())
}
