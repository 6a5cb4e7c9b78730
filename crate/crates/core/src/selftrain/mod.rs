//! The robust self-training loop.
//!
//! Each iteration trains `m` fresh classifiers. Classifier `i` distills an
//! `R%` subsample of the pseudo-label set (curriculum ordered), freezes its
//! tempered outputs on an `R%` subsample of the labeled set, and finetunes on
//! that subsample with the mixed objective. The classifiers then label the
//! unlabeled pool, candidates are filtered by agreement and confidence, ranked,
//! and the best batch moves into the pseudo-label set tagged with the
//! iteration number. When the pool is empty a final classifier is trained the
//! same way on all pseudo-labels and all labeled documents.

mod curriculum;
mod selection;

use std::collections::HashSet;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    capture_snapshot, ClassifierState, HardExample, SnapshotOutputs, SoftExample, TrainParams,
};
use crate::data::{validate_documents, Document};
use crate::error::{Error, Result};
use crate::infometrics::{argmax, Distribution, ScoreParams};
use crate::rng::{self, purpose, Tag};

pub use curriculum::order_curriculum;
pub use selection::{
    label_and_score, score_outputs, select_top, step_size, Candidate, Labeling, Pool, Ranking,
    Selected,
};

/// Hyperparameters of a self-training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Upper bound `K` on documents moved per iteration.
    pub step_size: usize,
    /// Subsample ratio `R` in percent.
    pub sample_ratio: f64,
    /// Smoothing factor of the candidate score.
    pub alpha: f64,
    /// Number of classifiers `m`.
    pub classifiers: usize,
    pub confidence_threshold: f64,
    /// Intake cap as a fraction of `|L| + |S|`.
    pub growth_cap_fraction: f64,
    /// Share of each curriculum block swapped into other blocks.
    pub mix_fraction: f64,
    pub hidden_width: usize,
    pub seed: u64,
    /// Train the `m` classifiers of an iteration on separate threads.
    pub parallel: bool,
    pub train: TrainParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            step_size: 100,
            sample_ratio: 70.0,
            alpha: 1e-4,
            classifiers: 2,
            confidence_threshold: 0.9,
            growth_cap_fraction: 0.10,
            mix_fraction: 0.20,
            hidden_width: 16,
            seed: 0,
            parallel: false,
            train: TrainParams::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        if self.classifiers < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 classifiers, got {}",
                self.classifiers
            )));
        }
        Ok(())
    }

    /// Checks everything except the classifier count, which single-model
    /// variants set to one.
    pub(crate) fn validate_structure(&self) -> Result<()> {
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 100.0) {
            return Err(Error::Validation(format!(
                "sample_ratio must lie in (0, 100], got {}",
                self.sample_ratio
            )));
        }
        if self.step_size == 0 {
            return Err(Error::Validation("step_size must be >= 1".into()));
        }
        if self.classifiers == 0 {
            return Err(Error::Validation("need at least 1 classifier".into()));
        }
        if !(0.0..=1.0).contains(&self.growth_cap_fraction) {
            return Err(Error::Validation(format!(
                "growth_cap_fraction must lie in [0, 1], got {}",
                self.growth_cap_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.mix_fraction) {
            return Err(Error::Validation(format!(
                "mix_fraction must lie in [0, 1], got {}",
                self.mix_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Validation(format!(
                "confidence_threshold must lie in [0, 1], got {}",
                self.confidence_threshold
            )));
        }
        ScoreParams::new(self.alpha)?;
        self.train.validate()
    }

    pub fn score_params(&self) -> ScoreParams {
        ScoreParams { alpha: self.alpha }
    }

    fn subsample_size(&self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        ((self.sample_ratio / 100.0 * n as f64).round() as usize).clamp(1, n)
    }
}

/// A document moved out of the unlabeled pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub doc_id: String,
    pub features: Vec<f64>,
    /// Element-wise mean of the classifiers' logits.
    pub mean_logits: Vec<f64>,
    /// `softmax(mean_logits)`.
    pub soft_label: Distribution,
    pub hard_label: usize,
    /// Iteration at which the document left the pool (1-based).
    pub iteration: usize,
}

impl PseudoLabel {
    fn from_candidate(candidate: Candidate, features: Vec<f64>, iteration: usize) -> Result<Self> {
        let soft_label = Distribution::from_logits(&candidate.mean_logits, 1.0)?;
        Ok(PseudoLabel {
            doc_id: candidate.doc_id,
            features,
            hard_label: argmax(soft_label.probs()),
            soft_label,
            mean_logits: candidate.mean_logits,
            iteration,
        })
    }

    /// Distillation target `softmax(mean_logits / T)`.
    pub fn target(&self, temperature: f64) -> Result<Distribution> {
        Distribution::from_logits(&self.mean_logits, temperature)
    }
}

/// One line of the run report. Set sizes are taken after the selected batch
/// has moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub step: usize,
    pub n_agree: usize,
    /// Agreed candidates rejected by the confidence cutoff.
    pub n_throttled: usize,
    pub selected_ids: Vec<String>,
    pub min_score: f64,
    pub max_score: f64,
    pub n_labeled: usize,
    pub n_pseudo: usize,
    pub n_unlabeled: usize,
    /// Snapshot checksums `(before, after)` finetuning, per classifier.
    #[serde(skip)]
    pub snapshot_checks: Vec<(String, String)>,
}

/// How members are trained in each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemberTraining {
    /// Distill pseudo-labels, then finetune on labeled data. Without a
    /// snapshot the finetuning objective is plain cross entropy.
    Distill { snapshot: bool },
    /// One joint pass over labeled and hard pseudo-labeled documents, the
    /// latter weighted by `pseudo_weight`.
    Joint { pseudo_weight: f64 },
}

/// The mechanisms a run uses; ablations swap exactly one of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mechanisms {
    pub ranking: Ranking,
    pub training: MemberTraining,
}

impl Mechanisms {
    pub const FULL: Mechanisms = Mechanisms {
        ranking: Ranking::UncertaintyScore,
        training: MemberTraining::Distill { snapshot: true },
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub mechanisms: Mechanisms,
    pub records: Vec<IterationRecord>,
    pub pseudo_labels: Vec<PseudoLabel>,
}

#[derive(Debug, Clone)]
pub struct RstOutcome {
    pub model: ClassifierState,
    pub report: RunReport,
}

/// Stepwise driver for the loop; [`run_rst`] drives it to completion.
#[derive(Debug)]
pub struct RstLoop<'a> {
    labeled: &'a [Document],
    unlabeled: Vec<Document>,
    pseudo: Vec<PseudoLabel>,
    n_classes: usize,
    dim: usize,
    config: RunConfig,
    mechanisms: Mechanisms,
    iteration: usize,
    records: Vec<IterationRecord>,
}

struct Member {
    state: ClassifierState,
    snapshot_check: Option<(String, String)>,
}

impl<'a> RstLoop<'a> {
    pub fn new(
        labeled: &'a [Document],
        unlabeled: &[Document],
        n_classes: usize,
        config: RunConfig,
    ) -> Result<Self> {
        config.validate()?;
        Self::with_mechanisms(labeled, unlabeled, n_classes, config, Mechanisms::FULL)
    }

    pub(crate) fn with_mechanisms(
        labeled: &'a [Document],
        unlabeled: &[Document],
        n_classes: usize,
        config: RunConfig,
        mechanisms: Mechanisms,
    ) -> Result<Self> {
        config.validate_structure()?;
        if mechanisms.ranking == Ranking::UncertaintyScore && config.classifiers < 2 {
            return Err(Error::Validation(
                "uncertainty ranking needs at least 2 classifiers".into(),
            ));
        }
        if let MemberTraining::Joint { pseudo_weight } = mechanisms.training {
            if !(pseudo_weight > 0.0 && pseudo_weight <= 1.0) {
                return Err(Error::Validation(format!(
                    "pseudo-label weight must lie in (0, 1], got {pseudo_weight}"
                )));
            }
        }
        let dim = check_inputs(labeled, unlabeled, n_classes)?;
        Ok(RstLoop {
            labeled,
            unlabeled: unlabeled.to_vec(),
            pseudo: Vec::new(),
            n_classes,
            dim,
            config,
            mechanisms,
            iteration: 0,
            records: Vec::new(),
        })
    }

    pub fn labeled(&self) -> &[Document] {
        self.labeled
    }

    pub fn unlabeled(&self) -> &[Document] {
        &self.unlabeled
    }

    pub fn pseudo_labels(&self) -> &[PseudoLabel] {
        &self.pseudo
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn is_done(&self) -> bool {
        self.unlabeled.is_empty()
    }

    /// Runs one iteration; returns `None` once the pool is empty.
    pub fn step(&mut self) -> Result<Option<&IterationRecord>> {
        if self.unlabeled.is_empty() {
            return Ok(None);
        }
        self.iteration += 1;
        let members = self.train_members()?;
        let states: Vec<ClassifierState> = members.iter().map(|m| m.state.clone()).collect();
        let labeling = label_and_score(
            &states,
            &self.unlabeled,
            self.mechanisms.ranking,
            &self.config.score_params(),
            self.config.confidence_threshold,
        )?;
        let step = step_size(
            self.config.step_size,
            self.config.growth_cap_fraction,
            self.labeled.len(),
            self.pseudo.len(),
        );
        let selected = select_top(&labeling, step);
        let (min_score, max_score) = selected
            .chosen
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                (lo.min(c.score), hi.max(c.score))
            });
        let selected_ids: Vec<String> = selected.chosen.iter().map(|c| c.doc_id.clone()).collect();
        self.move_to_pseudo(selected.chosen)?;
        self.records.push(IterationRecord {
            iteration: self.iteration,
            step,
            n_agree: labeling.n_agree(),
            n_throttled: labeling.n_throttled(),
            selected_ids,
            min_score,
            max_score,
            n_labeled: self.labeled.len(),
            n_pseudo: self.pseudo.len(),
            n_unlabeled: self.unlabeled.len(),
            snapshot_checks: members.into_iter().filter_map(|m| m.snapshot_check).collect(),
        });
        Ok(self.records.last())
    }

    fn move_to_pseudo(&mut self, chosen: Vec<Candidate>) -> Result<()> {
        let picked: HashSet<usize> = chosen.iter().map(|c| c.index).collect();
        let mut features: Vec<Option<Vec<f64>>> = vec![None; self.unlabeled.len()];
        let mut kept = Vec::with_capacity(self.unlabeled.len() - picked.len());
        for (i, doc) in std::mem::take(&mut self.unlabeled).into_iter().enumerate() {
            if picked.contains(&i) {
                features[i] = Some(doc.features);
            } else {
                kept.push(doc);
            }
        }
        self.unlabeled = kept;
        for candidate in chosen {
            let x = features[candidate.index].take().expect("selected index is unique");
            self.pseudo
                .push(PseudoLabel::from_candidate(candidate, x, self.iteration)?);
        }
        Ok(())
    }

    fn train_members(&self) -> Result<Vec<Member>> {
        let m = self.config.classifiers;
        if self.config.parallel && m > 1 {
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..m)
                    .map(|i| scope.spawn(move || self.train_member(i)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("member training thread panicked"))
                    .collect()
            })
        } else {
            (0..m).map(|i| self.train_member(i)).collect()
        }
    }

    fn member_tag(&self, purpose: u16, member: usize) -> Tag {
        Tag::new(purpose, self.iteration as u32, member as u16)
    }

    fn train_member(&self, member: usize) -> Result<Member> {
        let seed = self.config.seed;
        let pseudo_idx = subsample(
            self.pseudo.len(),
            self.config.subsample_size(self.pseudo.len()),
            seed,
            self.member_tag(purpose::SUBSAMPLE_PSEUDO, member),
        );
        let labeled_idx = subsample(
            self.labeled.len(),
            self.config.subsample_size(self.labeled.len()),
            seed,
            self.member_tag(purpose::SUBSAMPLE_LABELED, member),
        );
        let pseudo: Vec<&PseudoLabel> = pseudo_idx.iter().map(|&i| &self.pseudo[i]).collect();
        let labeled: Vec<Document> = labeled_idx.iter().map(|&i| self.labeled[i].clone()).collect();
        let init_seed = rng::derive(seed, self.member_tag(purpose::MEMBER_SEED, member));
        let curriculum_seed = rng::derive(seed, self.member_tag(purpose::CURRICULUM, member));
        self.train_classifier(&labeled, &pseudo, init_seed, curriculum_seed, |_, _, _| {})
    }

    /// Shared by members and the final classifier.
    fn train_classifier<F>(
        &self,
        labeled: &[Document],
        pseudo: &[&PseudoLabel],
        init_seed: u64,
        curriculum_seed: u64,
        on_epoch: F,
    ) -> Result<Member>
    where
        F: FnMut(usize, f64, &ClassifierState),
    {
        let mut state =
            ClassifierState::init(self.dim, self.n_classes, self.config.hidden_width, init_seed)?;
        let params = &self.config.train;
        match self.mechanisms.training {
            MemberTraining::Distill { snapshot } => {
                let tags: Vec<usize> = pseudo.iter().map(|p| p.iteration).collect();
                let mut rng = rng::stream(curriculum_seed, Tag::new(purpose::CURRICULUM, 0, 0));
                let order = curriculum::curriculum_order(&tags, self.config.mix_fraction, &mut rng);
                let targets = order
                    .iter()
                    .map(|&i| pseudo[i].target(params.temperature))
                    .collect::<Result<Vec<_>>>()?;
                let sequence: Vec<SoftExample> = order
                    .iter()
                    .zip(&targets)
                    .map(|(&i, target)| SoftExample {
                        features: &pseudo[i].features,
                        target,
                    })
                    .collect();
                state.train_soft(&sequence, params)?;

                if snapshot {
                    let frozen: SnapshotOutputs =
                        capture_snapshot(&state, labeled, params.temperature)?;
                    let before = frozen.checksum();
                    state.train_finetune_traced(labeled, Some(&frozen), params, init_seed, on_epoch)?;
                    let after = frozen.checksum();
                    if before != after {
                        return Err(Error::Contract("snapshot changed during finetuning".into()));
                    }
                    Ok(Member {
                        state,
                        snapshot_check: Some((before, after)),
                    })
                } else {
                    let plain = TrainParams {
                        lambda: 0.0,
                        ..params.clone()
                    };
                    state.train_finetune_traced(labeled, None, &plain, init_seed, on_epoch)?;
                    Ok(Member {
                        state,
                        snapshot_check: None,
                    })
                }
            }
            MemberTraining::Joint { pseudo_weight } => {
                let mut data: Vec<HardExample> = labeled
                    .iter()
                    .map(|d| {
                        Ok(HardExample {
                            features: &d.features,
                            label: d.label.ok_or_else(|| {
                                Error::Validation(format!("labeled document {} has no label", d.id))
                            })?,
                            weight: 1.0,
                        })
                    })
                    .collect::<Result<_>>()?;
                data.extend(pseudo.iter().map(|p| HardExample {
                    features: &p.features,
                    label: p.hard_label,
                    weight: pseudo_weight,
                }));
                state.train_hard_traced(&data, params, init_seed, on_epoch)?;
                Ok(Member {
                    state,
                    snapshot_check: None,
                })
            }
        }
    }

    /// Trains the final classifier on all pseudo-labels and all labeled
    /// documents. `on_epoch` observes every finetuning epoch (every joint
    /// epoch for joint training).
    pub fn finish_traced<F>(self, on_epoch: F) -> Result<RstOutcome>
    where
        F: FnMut(usize, f64, &ClassifierState),
    {
        let seed = self.config.seed;
        let init_seed = rng::derive(seed, Tag::new(purpose::FINAL_SEED, 0, 0));
        let curriculum_seed = rng::derive(seed, Tag::new(purpose::FINAL_SEED, 0, 1));
        let pseudo: Vec<&PseudoLabel> = self.pseudo.iter().collect();
        let model = self
            .train_classifier(self.labeled, &pseudo, init_seed, curriculum_seed, on_epoch)?
            .state;
        Ok(RstOutcome {
            model,
            report: RunReport {
                config: self.config,
                mechanisms: self.mechanisms,
                records: self.records,
                pseudo_labels: self.pseudo,
            },
        })
    }

    pub fn finish(self) -> Result<RstOutcome> {
        self.finish_traced(|_, _, _| {})
    }

    /// Steps until the pool is empty, then trains the final classifier.
    pub fn run_to_end(mut self) -> Result<RstOutcome> {
        while self.step()?.is_some() {}
        self.finish()
    }
}

/// Sorted indices of a without-replacement subsample.
fn subsample(n: usize, k: usize, seed: u64, tag: Tag) -> Vec<usize> {
    let mut rng = rng::stream(seed, tag);
    let mut idx = index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Validates labeled and unlabeled inputs together and returns the feature
/// dimension.
pub(crate) fn check_inputs(labeled: &[Document], unlabeled: &[Document], n_classes: usize) -> Result<usize> {
    let first = labeled
        .first()
        .ok_or_else(|| Error::Validation("labeled set is empty".into()))?;
    let dim = first.features.len();
    if let Some(doc) = labeled.iter().find(|d| d.label.is_none()) {
        return Err(Error::Validation(format!("labeled document {} has no label", doc.id)));
    }
    let all: Vec<Document> = labeled.iter().chain(unlabeled).cloned().collect();
    validate_documents(&all, n_classes, dim)?;
    Ok(dim)
}

/// Runs the full loop and trains the final classifier.
pub fn run_rst(
    labeled: &[Document],
    unlabeled: &[Document],
    n_classes: usize,
    config: &RunConfig,
) -> Result<RstOutcome> {
    RstLoop::new(labeled, unlabeled, n_classes, config.clone())?.run_to_end()
}

/// One loop iteration on explicit sets: returns the updated pseudo-label set
/// and pool. `iteration` is the 1-based tag given to the moved documents.
pub fn rst_iteration(
    labeled: &[Document],
    unlabeled: &[Document],
    pseudo: &[PseudoLabel],
    n_classes: usize,
    iteration: usize,
    config: &RunConfig,
) -> Result<(Vec<PseudoLabel>, Vec<Document>, IterationRecord)> {
    if unlabeled.is_empty() {
        return Err(Error::Validation("unlabeled pool is empty".into()));
    }
    let mut lp = RstLoop::new(labeled, unlabeled, n_classes, config.clone())?;
    lp.pseudo = pseudo.to_vec();
    lp.iteration = iteration.saturating_sub(1);
    let record = lp.step()?.cloned().expect("pool is not empty");
    Ok((lp.pseudo, lp.unlabeled, record))
}

#[cfg(test)]
mod tests;
