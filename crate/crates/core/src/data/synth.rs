//! Seeded synthetic benchmarks.

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Corpus, Document, Provenance};
use crate::error::{Error, Result};
use crate::rng::{self, purpose, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Isotropic Gaussian clusters with pairwise mean distance `class_separation`.
    GaussianBlobs,
    /// Concentric noisy rings in the first two dimensions, radius
    /// `(class + 1) * class_separation`.
    TwoRings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub generator: Generator,
    pub n_classes: usize,
    pub n_samples: usize,
    /// Class proportions; `None` means balanced.
    #[serde(default)]
    pub class_weights: Option<Vec<f64>>,
    pub dim: usize,
    pub class_separation: f64,
    pub overlap_noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Validation("synthetic corpus needs at least 2 classes".into()));
        }
        if self.dim == 0 {
            return Err(Error::Validation("synthetic dim must be >= 1".into()));
        }
        if self.generator == Generator::TwoRings && self.dim < 2 {
            return Err(Error::Validation("two_rings needs dim >= 2".into()));
        }
        if !(self.class_separation > 0.0) {
            return Err(Error::Validation(format!(
                "class_separation must be positive, got {}",
                self.class_separation
            )));
        }
        if !(self.overlap_noise_sigma >= 0.0) {
            return Err(Error::Validation("overlap_noise_sigma must be non-negative".into()));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.n_classes {
                return Err(Error::Validation(format!(
                    "class_weights has {} entries for {} classes",
                    w.len(),
                    self.n_classes
                )));
            }
            if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(
                    "class_weights must be non-negative and sum to 1".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.class_weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.n_classes as f64; self.n_classes])
    }

    /// Class centers for the Gaussian generator.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let (n, dim, sep) = (self.n_classes, self.dim, self.class_separation);
        (0..n)
            .map(|c| {
                let mut mean = vec![0.0; dim];
                if n == 2 {
                    mean[0] = if c == 0 { -sep / 2.0 } else { sep / 2.0 };
                } else if dim >= n {
                    mean[c] = sep / std::f64::consts::SQRT_2;
                } else if dim >= 2 {
                    let radius = sep / (2.0 * (std::f64::consts::PI / n as f64).sin());
                    let angle = 2.0 * std::f64::consts::PI * c as f64 / n as f64;
                    mean[0] = radius * angle.cos();
                    mean[1] = radius * angle.sin();
                } else {
                    mean[0] = sep * c as f64;
                }
                mean
            })
            .collect()
    }
}

/// Splits `total` into integer parts proportional to `weights` by the
/// largest-remainder rule; ties go to the lower index.
pub(crate) fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

pub fn synth(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let counts = apportion(spec.n_samples, &spec.weights());
    let mut rng = rng::stream(spec.seed, Tag::new(purpose::SYNTH, 0, 0));
    let means = spec.class_means();
    let sigma = spec.overlap_noise_sigma;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(spec.n_samples);
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let mut x: Vec<f64> = (0..spec.dim)
                .map(|_| sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect::<Vec<f64>>();
            match spec.generator {
                Generator::GaussianBlobs => {
                    for (xi, mi) in x.iter_mut().zip(&means[class]) {
                        *xi += mi;
                    }
                }
                Generator::TwoRings => {
                    let radius = (class + 1) as f64 * spec.class_separation;
                    let angle = rng.random_range(0.0..std::f64::consts::TAU);
                    x[0] += radius * angle.cos();
                    x[1] += radius * angle.sin();
                }
            }
            rows.push((x, class));
        }
    }
    rows.shuffle(&mut rng);
    let documents = rows
        .into_iter()
        .enumerate()
        .map(|(i, (features, label))| Document::new(format!("syn-{i:06}"), features, Some(label)))
        .collect();
    Ok(Corpus {
        documents,
        n_classes: spec.n_classes,
        feature_dim: spec.dim,
        provenance: Provenance::Synthetic { spec: spec.clone() },
    })
}

/// Out-of-place points planted in the unlabeled pool: documents of
/// `source_class` translated toward the centroid of the other classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistractorSpec {
    /// Fraction of the pool to shift.
    pub fraction: f64,
    pub source_class: usize,
    /// Shift length as a multiple of the distance between the source centroid
    /// and the centroid of the remaining classes.
    pub magnitude: f64,
}

impl DistractorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::Validation(format!(
                "distractor fraction must lie in [0, 1], got {}",
                self.fraction
            )));
        }
        if !self.magnitude.is_finite() {
            return Err(Error::Validation("distractor magnitude must be finite".into()));
        }
        Ok(())
    }
}

/// Shifts `round(fraction * len)` documents of the source class (fewer if the
/// class is smaller) and returns the ids that moved. `gold` holds the class of
/// each document.
pub fn inject_distractors(
    docs: &mut [Document],
    gold: &[usize],
    spec: &DistractorSpec,
    seed: u64,
) -> Result<Vec<String>> {
    spec.validate()?;
    if docs.len() != gold.len() {
        return Err(Error::Validation("gold labels do not match documents".into()));
    }
    let wanted = (spec.fraction * docs.len() as f64).round() as usize;
    if wanted == 0 {
        return Ok(Vec::new());
    }
    let dim = docs[0].features.len();
    let centroid = |pick: &dyn Fn(usize) -> bool| -> Option<Vec<f64>> {
        let mut sum = vec![0.0; dim];
        let mut n = 0usize;
        for (doc, &g) in docs.iter().zip(gold) {
            if pick(g) {
                sum.iter_mut().zip(&doc.features).for_each(|(s, x)| *s += x);
                n += 1;
            }
        }
        (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
    };
    let (Some(source), Some(rest)) = (
        centroid(&|g| g == spec.source_class),
        centroid(&|g| g != spec.source_class),
    ) else {
        return Ok(Vec::new());
    };
    let shift: Vec<f64> = rest
        .iter()
        .zip(&source)
        .map(|(r, s)| spec.magnitude * (r - s))
        .collect();
    let candidates: Vec<usize> = (0..docs.len()).filter(|&i| gold[i] == spec.source_class).collect();
    let take = wanted.min(candidates.len());
    let mut rng = rng::stream(seed, Tag::new(purpose::DISTRACTOR, 0, 0));
    let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), take)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| {
            docs[i].features.iter_mut().zip(&shift).for_each(|(x, s)| *x += s);
            docs[i].id.clone()
        })
        .collect())
}
