use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use super::synth::apportion;
use super::{fingerprint, Corpus, Document};
use crate::error::{Error, Result};
use crate::rng::{self, purpose, Tag};

/// Labeled, unlabeled and test partitions. Unlabeled documents carry no label;
/// their gold classes are kept aside for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub labeled: Vec<Document>,
    pub unlabeled: Vec<Document>,
    pub unlabeled_gold: Vec<usize>,
    pub test: Vec<Document>,
    pub n_classes: usize,
    pub feature_dim: usize,
}

impl Split {
    pub fn fingerprint(&self) -> String {
        let mut all = self.labeled.clone();
        all.extend(self.unlabeled.iter().zip(&self.unlabeled_gold).map(|(d, g)| Document {
            label: Some(*g),
            ..d.clone()
        }));
        all.extend(self.test.iter().cloned());
        fingerprint(&all)
    }

    /// The same split with the unlabeled pool cut to its first `n` documents.
    pub fn truncate_unlabeled(&self, n: usize) -> Split {
        let n = n.min(self.unlabeled.len());
        Split {
            unlabeled: self.unlabeled[..n].to_vec(),
            unlabeled_gold: self.unlabeled_gold[..n].to_vec(),
            ..self.clone()
        }
    }
}

/// Class-proportional sampling of three disjoint partitions.
pub fn stratified_split(
    corpus: &Corpus,
    n_labeled: usize,
    n_unlabeled: usize,
    n_test: usize,
    seed: u64,
) -> Result<Split> {
    corpus.validate()?;
    if corpus.documents.iter().any(|d| d.label.is_none()) {
        return Err(Error::Validation(
            "stratified split needs a fully labeled corpus".into(),
        ));
    }
    let needed = n_labeled + n_unlabeled + n_test;
    if needed > corpus.len() {
        return Err(Error::Validation(format!(
            "split needs {needed} documents but the corpus has {}",
            corpus.len()
        )));
    }
    let mut rng = rng::stream(seed, Tag::new(purpose::SPLIT, 0, 0));
    let counts = corpus.class_counts();
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mut by_class: Vec<Vec<&Document>> = vec![Vec::new(); corpus.n_classes];
    for doc in &corpus.documents {
        by_class[doc.label.unwrap()].push(doc);
    }
    for docs in &mut by_class {
        docs.shuffle(&mut rng);
    }

    let alloc_l = apportion(n_labeled, &weights);
    let alloc_t = apportion(n_test, &weights);
    let alloc_u = apportion(n_unlabeled, &weights);
    let (mut labeled, mut unlabeled, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (class, docs) in by_class.iter().enumerate() {
        let (l, t, u) = (alloc_l[class], alloc_t[class], alloc_u[class]);
        if l + t + u > docs.len() {
            return Err(Error::Validation(format!(
                "class {class} has {} documents but the split needs {}",
                docs.len(),
                l + t + u
            )));
        }
        labeled.extend(docs[..l].iter().map(|d| (*d).clone()));
        test.extend(docs[l..l + t].iter().map(|d| (*d).clone()));
        unlabeled.extend(docs[l + t..l + t + u].iter().map(|d| (*d).clone()));
    }
    labeled.shuffle(&mut rng);
    unlabeled.shuffle(&mut rng);
    test.shuffle(&mut rng);
    let unlabeled_gold = unlabeled.iter().map(|d| d.label.unwrap()).collect();
    for doc in &mut unlabeled {
        doc.label = None;
    }
    Ok(Split {
        labeled,
        unlabeled,
        unlabeled_gold,
        test,
        n_classes: corpus.n_classes,
        feature_dim: corpus.feature_dim,
    })
}

/// Flips exactly `round(flip_rate * len)` labels, each to a uniformly chosen
/// different class.
pub fn inject_label_noise(
    labeled: &[Document],
    n_classes: usize,
    flip_rate: f64,
    seed: u64,
) -> Result<Vec<Document>> {
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(Error::Validation(format!(
            "flip_rate must lie in [0, 1], got {flip_rate}"
        )));
    }
    if n_classes < 2 {
        return Err(Error::Validation("label noise needs at least 2 classes".into()));
    }
    let mut out = labeled.to_vec();
    let flips = (flip_rate * labeled.len() as f64).round() as usize;
    let mut rng = rng::stream(seed, Tag::new(purpose::NOISE, 0, 0));
    for i in index::sample(&mut rng, labeled.len(), flips) {
        let doc = &mut out[i];
        let current = doc.label.ok_or_else(|| {
            Error::Validation(format!("document {} has no label to flip", doc.id))
        })?;
        let offset = rng.random_range(1..n_classes);
        doc.label = Some((current + offset) % n_classes);
    }
    Ok(out)
}
