//! Reference methods and ablations.
//!
//! | Variant | Classifiers | Ranking | Training |
//! |---------|-------------|---------|----------|
//! | `rst_full` | `m` on `R%` subsamples | uncertainty score | distill, then finetune with snapshot penalty |
//! | `rst_no_subsample` | 1 on everything | max confidence | as `rst_full` |
//! | `rst_no_pretrain` | `m` on `R%` subsamples | uncertainty score | joint hard-label pass, pseudo weight 1 |
//! | `weighted_aug` | `m` on `R%` subsamples | uncertainty score | joint hard-label pass, pseudo weight `w` |
//! | `rst_plain_ce` | `m` on `R%` subsamples | uncertainty score | distill, then plain cross entropy |
//! | `self_train` | 1 on `L ∪ S` | max confidence | hard labels, retrained from scratch |
//! | `tri_entropy` | 3 on bootstraps of `L` | lowest mean entropy | hard labels, majority vote |

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{hex, ClassifierState, HardExample};
use crate::data::Document;
use crate::error::{Error, Result};
use crate::eval::{metrics, MetricMode};
use crate::infometrics::{softmax, ScoreParams};
use crate::rng::{self, purpose, Tag};
use crate::selftrain::{
    check_inputs, label_and_score, select_top, step_size, IterationRecord, Mechanisms,
    MemberTraining, Ranking, RstLoop, RunConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SelfTrain,
    WeightedAug,
    TriEntropy,
    RstNoSubsample,
    RstNoPretrain,
    RstPlainCe,
    RstFull,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::SelfTrain,
        Variant::WeightedAug,
        Variant::TriEntropy,
        Variant::RstNoSubsample,
        Variant::RstNoPretrain,
        Variant::RstPlainCe,
        Variant::RstFull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SelfTrain => "self_train",
            Variant::WeightedAug => "weighted_aug",
            Variant::TriEntropy => "tri_entropy",
            Variant::RstNoSubsample => "rst_no_subsample",
            Variant::RstNoPretrain => "rst_no_pretrain",
            Variant::RstPlainCe => "rst_plain_ce",
            Variant::RstFull => "rst_full",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Validation(format!(
                    "unknown variant {s:?}; expected one of {}",
                    known.join(", ")
                ))
            })
    }
}

const MODEL_MAGIC: &str = "rst-model v1";

/// Budget grid for plain self-training, as fractions of the unlabeled pool.
pub const SELF_TRAIN_BUDGETS: [f64; 4] = [0.10, 0.25, 0.50, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub variant: Variant,
    /// Loss weight of pseudo-labeled examples for `weighted_aug`.
    pub weight_pseudo: f64,
    /// Share of the labeled set held out to pick the self-training budget;
    /// zero disables the search and uses the whole pool.
    pub validation_fraction: f64,
    pub config: RunConfig,
}

impl VariantSpec {
    pub fn new(variant: Variant, config: RunConfig) -> Self {
        VariantSpec {
            variant,
            weight_pseudo: 0.5,
            validation_fraction: 0.0,
            config,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.variant == Variant::WeightedAug && !(self.weight_pseudo > 0.0 && self.weight_pseudo <= 1.0) {
            return Err(Error::Validation(format!(
                "weight_pseudo must lie in (0, 1], got {}",
                self.weight_pseudo
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Validation(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    /// Hash of everything shared across variants (the run config and the
    /// baseline knobs), independent of which variant is selected.
    pub fn shared_fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        let shared = serde_json::json!({
            "config": self.config,
            "weight_pseudo": self.weight_pseudo,
            "validation_fraction": self.validation_fraction,
        });
        hasher.update(shared.to_string().as_bytes());
        hex(&hasher.finalize())
    }

    /// The run config and mechanisms a loop-based variant actually uses.
    pub fn effective(&self) -> Option<(RunConfig, Mechanisms)> {
        let base = self.config.clone();
        let full = Mechanisms::FULL;
        match self.variant {
            Variant::RstFull => Some((base, full)),
            Variant::RstNoSubsample => Some((
                RunConfig {
                    classifiers: 1,
                    sample_ratio: 100.0,
                    ..base
                },
                Mechanisms {
                    ranking: Ranking::MaxConfidence,
                    ..full
                },
            )),
            Variant::RstNoPretrain => Some((
                base,
                Mechanisms {
                    training: MemberTraining::Joint { pseudo_weight: 1.0 },
                    ..full
                },
            )),
            Variant::WeightedAug => Some((
                base,
                Mechanisms {
                    training: MemberTraining::Joint {
                        pseudo_weight: self.weight_pseudo,
                    },
                    ..full
                },
            )),
            Variant::RstPlainCe => {
                let mut config = base;
                config.train.lambda = 0.0;
                Some((
                    config,
                    Mechanisms {
                        training: MemberTraining::Distill { snapshot: false },
                        ..full
                    },
                ))
            }
            Variant::SelfTrain | Variant::TriEntropy => None,
        }
    }
}

/// A trained predictor: one classifier or a majority-vote ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Single(ClassifierState),
    Vote(Vec<ClassifierState>),
}

impl TrainedModel {
    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        match self {
            TrainedModel::Single(state) => state.predict(features),
            TrainedModel::Vote(members) => {
                let probs = members
                    .iter()
                    .map(|m| Ok(softmax(&m.logits(features)?, 1.0)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(majority_vote(&probs))
            }
        }
    }

    pub fn members(&self) -> &[ClassifierState] {
        match self {
            TrainedModel::Single(state) => std::slice::from_ref(state),
            TrainedModel::Vote(members) => members,
        }
    }

    /// Model file: a `rst-model v1` line, `key value` metadata lines, the
    /// member count, then each member checkpoint after a `member <k>` line.
    pub fn to_model_file(&self, metadata: &[(&str, String)]) -> String {
        let mut out = format!("{MODEL_MAGIC}\n");
        for (key, value) in metadata {
            out.push_str(&format!("{key} {value}\n"));
        }
        out.push_str(&format!("members {}\n", self.members().len()));
        for (k, m) in self.members().iter().enumerate() {
            out.push_str(&format!("member {k}\n{}", m.to_checkpoint()));
        }
        out
    }

    /// Inverse of [`to_model_file`](Self::to_model_file); returns the metadata
    /// alongside the model.
    pub fn from_model_file(text: &str) -> Result<(Vec<(String, String)>, Self)> {
        let bad = |msg: String| Error::Validation(format!("model file: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some(MODEL_MAGIC) {
            return Err(bad("missing header".into()));
        }
        let mut metadata = Vec::new();
        let count = loop {
            let line = lines.next().ok_or_else(|| bad("missing member count".into()))?;
            let (key, value) = line.split_once(' ').ok_or_else(|| bad(format!("malformed line {line:?}")))?;
            if key == "members" {
                break value.parse::<usize>().map_err(|_| bad(format!("invalid member count {value:?}")))?;
            }
            metadata.push((key.to_string(), value.to_string()));
        };
        let mut chunks: Vec<String> = Vec::new();
        for line in lines {
            if line.strip_prefix("member ").is_some_and(|k| k.parse::<usize>() == Ok(chunks.len())) {
                chunks.push(String::new());
            } else {
                let chunk = chunks.last_mut().ok_or_else(|| bad("checkpoint before first member".into()))?;
                chunk.push_str(line);
                chunk.push('\n');
            }
        }
        if count == 0 || chunks.len() != count {
            return Err(bad(format!("expected {count} members, found {}", chunks.len())));
        }
        let mut members = chunks
            .iter()
            .map(|c| ClassifierState::from_checkpoint(c))
            .collect::<Result<Vec<_>>>()?;
        let model = if count == 1 {
            TrainedModel::Single(members.remove(0))
        } else {
            TrainedModel::Vote(members)
        };
        Ok((metadata, model))
    }

    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for m in self.members() {
            hasher.update(m.fingerprint().as_bytes());
        }
        hex(&hasher.finalize())
    }
}

/// Most frequent argmax; ties go to the tied class with the largest summed
/// probability, then to the lowest index.
pub fn majority_vote(member_probs: &[Vec<f64>]) -> usize {
    let n = member_probs.first().map_or(0, |p| p.len());
    let mut votes = vec![0usize; n];
    let mut mass = vec![0.0; n];
    for probs in member_probs {
        votes[crate::infometrics::argmax(probs)] += 1;
        for (m, p) in mass.iter_mut().zip(probs) {
            *m += p;
        }
    }
    let top = votes.iter().copied().max().unwrap_or(0);
    let mut best = None;
    for c in 0..n {
        if votes[c] == top && best.is_none_or(|b: usize| mass[c] > mass[b]) {
            best = Some(c);
        }
    }
    best.unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub model: TrainedModel,
    pub records: Vec<IterationRecord>,
    /// Config the variant actually ran with.
    pub effective_config: RunConfig,
    pub mechanisms: Option<Mechanisms>,
    pub shared_fingerprint: String,
    /// Budget picked on the validation split (self-training only).
    pub budget_fraction: Option<f64>,
}

/// Runs any variant; `rst_full` goes through the same loop as
/// [`run_rst`](crate::selftrain::run_rst).
pub fn run_variant(
    spec: &VariantSpec,
    labeled: &[Document],
    unlabeled: &[Document],
    n_classes: usize,
) -> Result<VariantOutcome> {
    run_variant_traced(spec, labeled, unlabeled, n_classes, |_, _, _| {})
}

/// [`run_variant`] observing each finetuning epoch of the final classifier.
pub fn run_variant_traced<F>(
    spec: &VariantSpec,
    labeled: &[Document],
    unlabeled: &[Document],
    n_classes: usize,
    on_final_epoch: F,
) -> Result<VariantOutcome>
where
    F: FnMut(usize, f64, &ClassifierState),
{
    spec.validate()?;
    let shared_fingerprint = spec.shared_fingerprint();
    match spec.variant {
        Variant::SelfTrain => {
            let (model, records, budget) = run_self_train_selected(spec, labeled, unlabeled, n_classes, on_final_epoch)?;
            Ok(VariantOutcome {
                variant: spec.variant,
                model: TrainedModel::Single(model),
                records,
                effective_config: spec.config.clone(),
                mechanisms: None,
                shared_fingerprint,
                budget_fraction: Some(budget),
            })
        }
        Variant::TriEntropy => {
            let (members, records) = run_tri_entropy(labeled, unlabeled, n_classes, &spec.config)?;
            Ok(VariantOutcome {
                variant: spec.variant,
                model: TrainedModel::Vote(members),
                records,
                effective_config: spec.config.clone(),
                mechanisms: None,
                shared_fingerprint,
                budget_fraction: None,
            })
        }
        _ => {
            let (config, mechanisms) = spec.effective().expect("loop-based variant");
            let outcome = RstLoop::with_mechanisms(labeled, unlabeled, n_classes, config.clone(), mechanisms)?;
            let mut lp = outcome;
            while lp.step()?.is_some() {}
            let outcome = lp.finish_traced(on_final_epoch)?;
            Ok(VariantOutcome {
                variant: spec.variant,
                model: TrainedModel::Single(outcome.model),
                records: outcome.report.records,
                effective_config: config,
                mechanisms: Some(mechanisms),
                shared_fingerprint,
                budget_fraction: None,
            })
        }
    }
}

/// Dispatches an ablation. Same as [`run_variant`]; named for the ablation
/// entry point of the experiment harness.
pub fn run_ablation(
    spec: &VariantSpec,
    labeled: &[Document],
    unlabeled: &[Document],
    n_classes: usize,
) -> Result<VariantOutcome> {
    run_variant(spec, labeled, unlabeled, n_classes)
}

fn hard_examples<'a>(labeled: &'a [Document], pseudo: &'a [(Document, usize)]) -> Vec<HardExample<'a>> {
    labeled
        .iter()
        .map(|d| HardExample {
            features: &d.features,
            label: d.label.expect("labeled documents are checked"),
            weight: 1.0,
        })
        .chain(pseudo.iter().map(|(d, label)| HardExample {
            features: &d.features,
            label: *label,
            weight: 1.0,
        }))
        .collect()
}

/// Moves the chosen candidates out of `pool` and returns them with their labels.
fn take_selected(pool: &mut Vec<Document>, chosen: &[crate::selftrain::Candidate]) -> Vec<(Document, usize)> {
    let mut label_of: Vec<Option<usize>> = vec![None; pool.len()];
    for c in chosen {
        label_of[c.index] = Some(c.hard_label);
    }
    let mut moved = Vec::with_capacity(chosen.len());
    let mut kept = Vec::with_capacity(pool.len() - chosen.len());
    for (doc, label) in std::mem::take(pool).into_iter().zip(label_of) {
        match label {
            Some(l) => moved.push((doc, l)),
            None => kept.push(doc),
        }
    }
    *pool = kept;
    moved
}

fn record(
    iteration: usize,
    step: usize,
    labeling: &crate::selftrain::Labeling,
    chosen: &[crate::selftrain::Candidate],
    sizes: (usize, usize, usize),
) -> IterationRecord {
    let (min_score, max_score) = chosen
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.score), hi.max(c.score)));
    IterationRecord {
        iteration,
        step,
        n_agree: labeling.n_agree(),
        n_throttled: labeling.n_throttled(),
        selected_ids: chosen.iter().map(|c| c.doc_id.clone()).collect(),
        min_score,
        max_score,
        n_labeled: sizes.0,
        n_pseudo: sizes.1,
        n_unlabeled: sizes.2,
        snapshot_checks: Vec::new(),
    }
}

/// Plain neural self-training: one classifier retrained from scratch on
/// `L ∪ S` with hard labels each iteration, candidates ranked by softmax
/// confidence. Stops once `budget` pseudo-labels have been taken.
pub fn run_self_train(
    labeled: &[Document],
    unlabeled: &[Document],
    n_classes: usize,
    config: &RunConfig,
    budget: usize,
) -> Result<(ClassifierState, Vec<IterationRecord>)> {
    run_self_train_traced(labeled, unlabeled, n_classes, config, budget, |_, _, _| {})
}

fn run_self_train_traced<F>(
    labeled: &[Document],
    unlabeled: &[Document],
    n_classes: usize,
    config: &RunConfig,
    budget: usize,
    on_final_epoch: F,
) -> Result<(ClassifierState, Vec<IterationRecord>)>
where
    F: FnMut(usize, f64, &ClassifierState),
{
    config.validate_structure()?;
    let dim = check_inputs(labeled, unlabeled, n_classes)?;
    let mut pool = unlabeled.to_vec();
    let mut pseudo: Vec<(Document, usize)> = Vec::new();
    let mut records = Vec::new();
    let train = |pseudo: &[(Document, usize)], tag: Tag, on_epoch: &mut dyn FnMut(usize, f64, &ClassifierState)| {
        let seed = rng::derive(config.seed, tag);
        let mut state = ClassifierState::init(dim, n_classes, config.hidden_width, seed)?;
        state.train_hard_traced(&hard_examples(labeled, pseudo), &config.train, seed, on_epoch)?;
        Ok::<_, Error>(state)
    };
    let mut iteration = 0;
    while !pool.is_empty() && pseudo.len() < budget {
        iteration += 1;
        let state = train(&pseudo, Tag::new(purpose::MEMBER_SEED, iteration as u32, 0), &mut |_, _, _| {})?;
        let labeling = label_and_score(
            std::slice::from_ref(&state),
            &pool,
            Ranking::MaxConfidence,
            &ScoreParams::default(),
            config.confidence_threshold,
        )?;
        let step = step_size(config.step_size, config.growth_cap_fraction, labeled.len(), pseudo.len())
            .min(budget - pseudo.len());
        let selected = select_top(&labeling, step);
        let moved = take_selected(&mut pool, &selected.chosen);
        pseudo.extend(moved);
        records.push(record(
            iteration,
            step,
            &labeling,
            &selected.chosen,
            (labeled.len(), pseudo.len(), pool.len()),
        ));
    }
    let mut on_final_epoch = on_final_epoch;
    let model = train(&pseudo, Tag::new(purpose::FINAL_SEED, 0, 0), &mut on_final_epoch)?;
    Ok((model, records))
}

/// Self-training with the budget chosen on a held-out validation split when
/// `validation_fraction > 0`, otherwise the whole pool.
fn run_self_train_selected<F>(
    spec: &VariantSpec,
    labeled: &[Document],
    unlabeled: &[Document],
    n_classes: usize,
    on_final_epoch: F,
) -> Result<(ClassifierState, Vec<IterationRecord>, f64)>
where
    F: FnMut(usize, f64, &ClassifierState),
{
    let config = &spec.config;
    let mut fraction = 1.0;
    if spec.validation_fraction > 0.0 {
        let (train, validation) = holdout(labeled, n_classes, spec.validation_fraction, config.seed);
        if !train.is_empty() && !validation.is_empty() {
            let gold: Vec<usize> = validation.iter().map(|d| d.label.unwrap()).collect();
            let mut best = f64::NEG_INFINITY;
            for candidate in SELF_TRAIN_BUDGETS {
                let budget = (candidate * unlabeled.len() as f64).round() as usize;
                let (model, _) = run_self_train(&train, unlabeled, n_classes, config, budget)?;
                let predictions = validation
                    .iter()
                    .map(|d| model.predict(&d.features))
                    .collect::<Result<Vec<_>>>()?;
                let f1 = metrics(&predictions, &gold, n_classes, MetricMode::MacroF1)?.value;
                if f1 > best {
                    best = f1;
                    fraction = candidate;
                }
            }
        }
    }
    let budget = (fraction * unlabeled.len() as f64).round() as usize;
    let (model, records) = run_self_train_traced(labeled, unlabeled, n_classes, config, budget, on_final_epoch)?;
    Ok((model, records, fraction))
}

/// Stratified holdout of `fraction` of each class.
fn holdout(labeled: &[Document], n_classes: usize, fraction: f64, seed: u64) -> (Vec<Document>, Vec<Document>) {
    use rand::seq::SliceRandom;
    let mut rng = rng::stream(seed, Tag::new(purpose::VALIDATION, 0, 0));
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for class in 0..n_classes {
        let mut docs: Vec<&Document> = labeled.iter().filter(|d| d.label == Some(class)).collect();
        docs.shuffle(&mut rng);
        let k = (fraction * docs.len() as f64).round() as usize;
        validation.extend(docs[..k].iter().map(|d| (*d).clone()));
        train.extend(docs[k..].iter().map(|d| (*d).clone()));
    }
    (train, validation)
}

/// Tri-training with entropy selection: three classifiers on bootstrap
/// resamples of `L`, candidates all three agree on ranked by ascending mean
/// entropy, adopted as hard labels into a shared pool.
pub fn run_tri_entropy(
    labeled: &[Document],
    unlabeled: &[Document],
    n_classes: usize,
    config: &RunConfig,
) -> Result<(Vec<ClassifierState>, Vec<IterationRecord>)> {
    config.validate_structure()?;
    let dim = check_inputs(labeled, unlabeled, n_classes)?;
    let bootstraps: Vec<Vec<Document>> = (0..3u16)
        .map(|k| {
            let mut rng = rng::stream(config.seed, Tag::new(purpose::BOOTSTRAP, 0, k));
            (0..labeled.len())
                .map(|_| labeled[rng.random_range(0..labeled.len())].clone())
                .collect()
        })
        .collect();
    let train_all = |pseudo: &[(Document, usize)], major: u32, purpose_code: u16| {
        bootstraps
            .iter()
            .enumerate()
            .map(|(k, boot)| {
                let seed = rng::derive(config.seed, Tag::new(purpose_code, major, k as u16));
                let mut state = ClassifierState::init(dim, n_classes, config.hidden_width, seed)?;
                state.train_hard(&hard_examples(boot, pseudo), &config.train, seed)?;
                Ok(state)
            })
            .collect::<Result<Vec<_>>>()
    };
    let mut pool = unlabeled.to_vec();
    let mut pseudo: Vec<(Document, usize)> = Vec::new();
    let mut records = Vec::new();
    let mut iteration = 0;
    while !pool.is_empty() {
        iteration += 1;
        let members = train_all(&pseudo, iteration as u32, purpose::MEMBER_SEED)?;
        let labeling = label_and_score(
            &members,
            &pool,
            Ranking::LowEntropy,
            &ScoreParams::default(),
            config.confidence_threshold,
        )?;
        let step = step_size(config.step_size, config.growth_cap_fraction, labeled.len(), pseudo.len());
        let selected = select_top(&labeling, step);
        pseudo.extend(take_selected(&mut pool, &selected.chosen));
        records.push(record(
            iteration,
            step,
            &labeling,
            &selected.chosen,
            (labeled.len(), pseudo.len(), pool.len()),
        ));
    }
    let members = train_all(&pseudo, 0, purpose::FINAL_SEED)?;
    Ok((members, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{stratified_split, synth, Generator, Split, SynthSpec};
    use crate::selftrain::run_rst;
    use crate::classifier::TrainParams;

    fn split(seed: u64, n_unlabeled: usize) -> Split {
        let corpus = synth(&SynthSpec {
            generator: Generator::GaussianBlobs,
            n_classes: 2,
            n_samples: 40 + n_unlabeled + 20,
            class_weights: None,
            dim: 3,
            class_separation: 3.0,
            overlap_noise_sigma: 1.0,
            seed,
        })
        .unwrap();
        stratified_split(&corpus, 40, n_unlabeled, 20, seed).unwrap()
    }

    fn config() -> RunConfig {
        RunConfig {
            hidden_width: 4,
            train: TrainParams { epochs: 3, ..TrainParams::default() },
            ..RunConfig::default()
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("rst_turbo".parse::<Variant>().is_err());
    }

    #[test]
    fn majority_vote_rules() {
        let a = vec![0.9, 0.1];
        let b = vec![0.2, 0.8];
        assert_eq!(majority_vote(&[a.clone(), a.clone(), b.clone()]), 0);
        assert_eq!(majority_vote(&[b.clone(), a.clone(), b.clone()]), 1);
        let three = [vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.2, 0.1, 0.7]];
        assert_eq!(majority_vote(&three), 2);
    }

    #[test]
    fn rst_full_dispatch_is_identical_to_run_rst() {
        let s = split(1, 60);
        let direct = run_rst(&s.labeled, &s.unlabeled, 2, &config()).unwrap();
        let via = run_ablation(&VariantSpec::new(Variant::RstFull, config()), &s.labeled, &s.unlabeled, 2).unwrap();
        assert_eq!(via.records, direct.report.records);
        assert_eq!(via.model, TrainedModel::Single(direct.model));
    }

    #[test]
    fn structural_ablations() {
        let spec = VariantSpec::new(Variant::RstNoSubsample, config());
        let (cfg, mech) = spec.effective().unwrap();
        assert_eq!(cfg.classifiers, 1);
        assert_eq!(mech.ranking, Ranking::MaxConfidence);

        let spec = VariantSpec::new(Variant::RstPlainCe, config());
        let (cfg, mech) = spec.effective().unwrap();
        assert_eq!(cfg.train.lambda, 0.0);
        assert_eq!(mech.training, MemberTraining::Distill { snapshot: false });

        let s = split(2, 40);
        let out = run_variant(&spec, &s.labeled, &s.unlabeled, 2).unwrap();
        assert!(out.records.iter().all(|r| r.snapshot_checks.is_empty()));
        let full = run_variant(&VariantSpec::new(Variant::RstFull, config()), &s.labeled, &s.unlabeled, 2).unwrap();
        assert!(full.records.iter().all(|r| r.snapshot_checks.len() == 2));
        assert_eq!(out.shared_fingerprint, full.shared_fingerprint);
    }

    #[test]
    fn every_variant_exhausts_the_pool() {
        let s = split(3, 50);
        for v in Variant::ALL {
            let out = run_variant(&VariantSpec::new(v, config()), &s.labeled, &s.unlabeled, 2).unwrap();
            let taken: usize = out.records.iter().map(|r| r.selected_ids.len()).sum();
            assert_eq!(taken, 50, "{v}");
            assert_eq!(out.records.last().unwrap().n_unlabeled, 0, "{v}");
            for d in &s.test {
                assert!(out.model.predict(&d.features).unwrap() < 2);
            }
        }
    }

    #[test]
    fn self_train_with_empty_pool_is_supervised() {
        let s = split(4, 0);
        let (model, records) = run_self_train(&s.labeled, &[], 2, &config(), 0).unwrap();
        assert!(records.is_empty());
        let seed = rng::derive(config().seed, Tag::new(purpose::FINAL_SEED, 0, 0));
        let mut manual = ClassifierState::init(3, 2, 4, seed).unwrap();
        manual.train_hard(&hard_examples(&s.labeled, &[]), &config().train, seed).unwrap();
        assert_eq!(model, manual);
    }

    #[test]
    fn self_train_selects_confident_candidates_first() {
        let s = split(5, 80);
        let (_, records) = run_self_train(&s.labeled, &s.unlabeled, 2, &config(), usize::MAX).unwrap();
        for r in &records {
            if r.n_agree > r.n_throttled {
                assert!(r.min_score >= 0.9, "{r:?}");
            }
        }
        let (_, again) = run_self_train(&s.labeled, &s.unlabeled, 2, &config(), usize::MAX).unwrap();
        assert_eq!(records, again);
    }

    #[test]
    fn self_train_budget_and_validation() {
        let s = split(6, 80);
        let (_, records) = run_self_train(&s.labeled, &s.unlabeled, 2, &config(), 20).unwrap();
        let taken: usize = records.iter().map(|r| r.selected_ids.len()).sum();
        assert_eq!(taken, 20);
        let spec = VariantSpec { validation_fraction: 0.2, ..VariantSpec::new(Variant::SelfTrain, config()) };
        let out = run_variant(&spec, &s.labeled, &s.unlabeled, 2).unwrap();
        assert!(SELF_TRAIN_BUDGETS.contains(&out.budget_fraction.unwrap()));
    }

    #[test]
    fn weighted_aug_weight_validation() {
        let spec = VariantSpec { weight_pseudo: 0.0, ..VariantSpec::new(Variant::WeightedAug, config()) };
        assert!(spec.validate().is_err());
        let s = split(7, 30);
        let ok = VariantSpec::new(Variant::WeightedAug, config());
        let out = run_variant(&ok, &s.labeled, &s.unlabeled, 2).unwrap();
        assert_eq!(out.mechanisms.unwrap().training, MemberTraining::Joint { pseudo_weight: 0.5 });
    }

    #[test]
    fn weight_one_joint_equals_no_pretrain() {
        let s = split(8, 30);
        let mut cfg = config();
        cfg.train.lambda = 0.0;
        let w1 = VariantSpec { weight_pseudo: 1.0, ..VariantSpec::new(Variant::WeightedAug, cfg.clone()) };
        let a = run_variant(&w1, &s.labeled, &s.unlabeled, 2).unwrap();
        let b = run_variant(&VariantSpec::new(Variant::RstNoPretrain, cfg), &s.labeled, &s.unlabeled, 2).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn tri_entropy_is_a_three_way_vote() {
        let s = split(9, 40);
        let out = run_variant(&VariantSpec::new(Variant::TriEntropy, config()), &s.labeled, &s.unlabeled, 2).unwrap();
        assert_eq!(out.model.members().len(), 3);
        let text = out.model.to_model_file(&[("variant", "tri_entropy".into()), ("seed", "0".into())]);
        let (meta, back) = TrainedModel::from_model_file(&text).unwrap();
        assert_eq!(back, out.model);
        assert_eq!(meta[0], ("variant".to_string(), "tri_entropy".to_string()));
        assert!(TrainedModel::from_model_file(&text.replace("members 3", "members 2")).is_err());
        assert!(TrainedModel::from_model_file("rst-model v1\nmembers 0\n").is_err());
    }
}
