//! A small differentiable softmax classifier.
//!
//! The model is a feed-forward network with one `tanh` hidden layer, or a
//! multinomial logistic regression when the hidden width is zero. It exposes
//! tempered outputs, the mixed finetuning objective (hard-label cross entropy
//! blended with cross entropy against a frozen tempered snapshot), its exact
//! gradient, and the three training phases used by self-training.

mod checkpoint;
pub mod optim;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Document;
use crate::error::{Error, Result};
use crate::infometrics::{argmax, softmax, Distribution};
use crate::rng::{self, purpose, Tag};

pub use optim::{Optimizer, OptimizerKind};

/// Hyperparameters of one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Distillation temperature, `T >= 1`.
    pub temperature: f64,
    /// Weight of the snapshot term in the finetuning objective, in `[0, 1]`.
    pub lambda: f64,
    pub optimizer: OptimizerKind,
    pub linear_decay: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 1e-2,
            batch_size: 32,
            epochs: 20,
            temperature: 2.0,
            lambda: 0.3,
            optimizer: OptimizerKind::Adam,
            linear_decay: true,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Validation(
                "batch_size and epochs must be positive".into(),
            ));
        }
        if !(self.temperature >= 1.0 && self.temperature.is_finite()) {
            return Err(Error::Validation(format!(
                "temperature must be >= 1, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Validation(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    fn build_optimizer(&self, n_examples: usize, n_params: usize) -> Optimizer {
        let steps = self.epochs * n_examples.div_ceil(self.batch_size);
        Optimizer::new(
            self.optimizer,
            self.learning_rate,
            self.linear_decay,
            steps,
            n_params,
        )
    }
}

/// Parameters of the classifier, stored as one flat vector laid out as
/// `[w1 (hidden x dim), b1 (hidden), w2 (classes x fan_in), b2 (classes)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierState {
    dim: usize,
    hidden: usize,
    classes: usize,
    seed: u64,
    params: Vec<f64>,
}

/// Gradient with the same layout as [`ClassifierState::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(pub Vec<f64>);

impl Gradient {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl ClassifierState {
    /// Seeded initialization, uniform in `±1/sqrt(fan_in)` for every tensor.
    pub fn init(dim: usize, classes: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut state = Self::zeros(dim, classes, hidden, seed)?;
        let mut rng = rng::stream(seed, Tag::new(purpose::INIT, 0, 0));
        let layout = state.layout();
        if hidden > 0 {
            let bound = 1.0 / (dim as f64).sqrt();
            for p in &mut state.params[..layout.w2] {
                *p = rng.random_range(-bound..bound);
            }
        }
        let bound = 1.0 / (state.fan_in() as f64).sqrt();
        for p in &mut state.params[layout.w2..] {
            *p = rng.random_range(-bound..bound);
        }
        Ok(state)
    }

    /// All-zero parameters; every input maps to the uniform distribution.
    pub fn zeros(dim: usize, classes: usize, hidden: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("feature dimension must be >= 1".into()));
        }
        if classes < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        let count = param_count(dim, classes, hidden);
        Ok(ClassifierState {
            dim,
            hidden,
            classes,
            seed,
            params: vec![0.0; count],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// SHA-256 over the architecture header and the raw parameter bits.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for v in [self.dim, self.hidden, self.classes] {
            hasher.update((v as u64).to_le_bytes());
        }
        hasher.update(self.seed.to_le_bytes());
        for p in &self.params {
            hasher.update(p.to_bits().to_le_bytes());
        }
        hex(&hasher.finalize())
    }

    fn fan_in(&self) -> usize {
        if self.hidden > 0 {
            self.hidden
        } else {
            self.dim
        }
    }

    fn layout(&self) -> Layout {
        let w1 = self.hidden * self.dim;
        let b1 = w1 + self.hidden;
        Layout {
            b1: w1,
            w2: b1,
            b2: b1 + self.classes * self.fan_in(),
        }
    }

    fn check_features(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::Validation(format!(
                "feature length {} does not match model dimension {}",
                features.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Last-layer logits.
    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_features(features)?;
        let mut hidden = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.classes];
        self.forward_into(features, &mut hidden, &mut logits);
        Ok(logits)
    }

    /// `softmax(logits / temperature)`.
    pub fn forward(&self, features: &[f64], temperature: f64) -> Result<Distribution> {
        Distribution::from_logits(&self.logits(features)?, temperature)
    }

    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(features)?))
    }

    fn forward_into(&self, x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        let layout = self.layout();
        let p = &self.params;
        let input: &[f64] = if self.hidden > 0 {
            for (j, h) in hidden.iter_mut().enumerate() {
                let row = &p[j * self.dim..(j + 1) * self.dim];
                let pre = p[layout.b1 + j] + dot(row, x);
                *h = pre.tanh();
            }
            hidden
        } else {
            x
        };
        let fan_in = input.len();
        for (c, z) in logits.iter_mut().enumerate() {
            let row = &p[layout.w2 + c * fan_in..layout.w2 + (c + 1) * fan_in];
            *z = p[layout.b2 + c] + dot(row, input);
        }
    }

    /// Accumulates the gradient of one example given `d loss / d logits`.
    fn backward_into(&self, x: &[f64], hidden: &[f64], dlogits: &[f64], grad: &mut [f64]) {
        let layout = self.layout();
        let input: &[f64] = if self.hidden > 0 { hidden } else { x };
        let fan_in = input.len();
        for (c, dz) in dlogits.iter().enumerate() {
            if *dz == 0.0 {
                continue;
            }
            grad[layout.b2 + c] += dz;
            let row = &mut grad[layout.w2 + c * fan_in..layout.w2 + (c + 1) * fan_in];
            for (g, v) in row.iter_mut().zip(input) {
                *g += dz * v;
            }
        }
        if self.hidden == 0 {
            return;
        }
        for j in 0..self.hidden {
            let mut dh = 0.0;
            for (c, dz) in dlogits.iter().enumerate() {
                dh += self.params[layout.w2 + c * fan_in + j] * dz;
            }
            let dpre = dh * (1.0 - hidden[j] * hidden[j]);
            if dpre == 0.0 {
                continue;
            }
            grad[layout.b1 + j] += dpre;
            let row = &mut grad[j * self.dim..(j + 1) * self.dim];
            for (g, v) in row.iter_mut().zip(x) {
                if *v != 0.0 {
                    *g += dpre * v;
                }
            }
        }
    }

    /// Mean objective over `examples`, optionally accumulating the mean gradient.
    fn objective(&self, examples: &[Example<'_>], mut grad: Option<&mut [f64]>) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let mut hidden = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.classes];
        let mut dlogits = vec![0.0; self.classes];
        let scale = 1.0 / examples.len() as f64;
        let mut total = 0.0;
        for ex in examples {
            self.forward_into(ex.features, &mut hidden, &mut logits);
            dlogits.iter_mut().for_each(|d| *d = 0.0);
            let mut loss = 0.0;
            if let Some(label) = ex.hard {
                if ex.hard_weight != 0.0 {
                    let probs = softmax(&logits, 1.0);
                    let log_probs = log_softmax(&logits, 1.0);
                    loss += ex.hard_weight * -log_probs[label];
                    for (c, d) in dlogits.iter_mut().enumerate() {
                        let target = if c == label { 1.0 } else { 0.0 };
                        *d += ex.hard_weight * (probs[c] - target);
                    }
                }
            }
            if let Some(target) = ex.soft {
                if ex.soft_weight != 0.0 {
                    let t = ex.temperature;
                    let probs = softmax(&logits, t);
                    let log_probs = log_softmax(&logits, t);
                    loss += ex.soft_weight * cross_entropy(target, &log_probs);
                    for (c, d) in dlogits.iter_mut().enumerate() {
                        *d += ex.soft_weight * (probs[c] - target[c]) / t;
                    }
                }
            }
            total += ex.weight * loss;
            if let Some(g) = grad.as_deref_mut() {
                dlogits.iter_mut().for_each(|d| *d *= ex.weight * scale);
                self.backward_into(ex.features, &hidden, &dlogits, g);
            }
        }
        total * scale
    }

    fn run_epochs<F>(
        &mut self,
        examples: &[Example<'_>],
        params: &TrainParams,
        mut shuffle: Option<&mut rng::Rng>,
        mut on_epoch: F,
    ) where
        F: FnMut(usize, f64, &ClassifierState),
    {
        if examples.is_empty() {
            return;
        }
        let mut optimizer = params.build_optimizer(examples.len(), self.params.len());
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut batch = Vec::with_capacity(params.batch_size);
        let mut grad = vec![0.0; self.params.len()];
        for epoch in 0..params.epochs {
            if let Some(rng) = shuffle.as_deref_mut() {
                order.shuffle(rng);
            }
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(params.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| examples[i]));
                grad.iter_mut().for_each(|g| *g = 0.0);
                epoch_loss += self.objective(&batch, Some(&mut grad)) * chunk.len() as f64;
                optimizer.apply(&mut self.params, &grad);
            }
            on_epoch(epoch, epoch_loss / examples.len() as f64, self);
        }
    }

    /// Distillation on soft targets in the given order. Each epoch walks the
    /// sequence front to back in consecutive mini-batches; an empty sequence
    /// leaves the state untouched.
    pub fn train_soft(&mut self, sequence: &[SoftExample<'_>], params: &TrainParams) -> Result<()> {
        params.validate()?;
        let examples = sequence
            .iter()
            .map(|s| {
                self.check_features(s.features)?;
                check_target(s.target, self.classes)?;
                Ok(Example::soft(s.features, s.target.probs(), params.temperature))
            })
            .collect::<Result<Vec<_>>>()?;
        self.run_epochs(&examples, params, None, |_, _, _| {});
        Ok(())
    }

    /// Hard-label training with per-example weights, shuffled each epoch.
    pub fn train_hard(
        &mut self,
        data: &[HardExample<'_>],
        params: &TrainParams,
        shuffle_seed: u64,
    ) -> Result<()> {
        self.train_hard_traced(data, params, shuffle_seed, |_, _, _| {})
    }

    pub fn train_hard_traced<F>(
        &mut self,
        data: &[HardExample<'_>],
        params: &TrainParams,
        shuffle_seed: u64,
        on_epoch: F,
    ) -> Result<()>
    where
        F: FnMut(usize, f64, &ClassifierState),
    {
        params.validate()?;
        let examples = data
            .iter()
            .map(|h| {
                self.check_features(h.features)?;
                self.check_label(h.label)?;
                Ok(Example::hard(h.features, h.label, h.weight))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = rng::stream(shuffle_seed, Tag::new(purpose::SHUFFLE, 0, 0));
        self.run_epochs(&examples, params, Some(&mut rng), on_epoch);
        Ok(())
    }

    /// Finetunes on the labeled set with the mixed objective. The snapshot,
    /// when given, must cover exactly the ids of `labeled`; without one the
    /// objective is plain cross entropy and `lambda` must be zero.
    pub fn train_finetune(
        &mut self,
        labeled: &[Document],
        snapshot: Option<&SnapshotOutputs>,
        params: &TrainParams,
        shuffle_seed: u64,
    ) -> Result<()> {
        self.train_finetune_traced(labeled, snapshot, params, shuffle_seed, |_, _, _| {})
    }

    /// [`train_finetune`](Self::train_finetune) with a callback after every
    /// epoch receiving `(epoch, mean mini-batch loss, state)`.
    pub fn train_finetune_traced<F>(
        &mut self,
        labeled: &[Document],
        snapshot: Option<&SnapshotOutputs>,
        params: &TrainParams,
        shuffle_seed: u64,
        on_epoch: F,
    ) -> Result<()>
    where
        F: FnMut(usize, f64, &ClassifierState),
    {
        params.validate()?;
        match snapshot {
            Some(snap) => {
                snap.check_covers(labeled)?;
                if snap.temperature != params.temperature {
                    return Err(Error::Contract(format!(
                        "snapshot captured at T={} but finetuning uses T={}",
                        snap.temperature, params.temperature
                    )));
                }
            }
            None if params.lambda != 0.0 => {
                return Err(Error::Contract(
                    "finetuning with lambda > 0 requires a captured snapshot".into(),
                ));
            }
            None => {}
        }
        let examples = self.eq1_examples(labeled, snapshot, params.lambda, params.temperature)?;
        let mut rng = rng::stream(shuffle_seed, Tag::new(purpose::SHUFFLE, 0, 1));
        self.run_epochs(&examples, params, Some(&mut rng), on_epoch);
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.classes {
            return Err(Error::Validation(format!(
                "label {label} out of range for {} classes",
                self.classes
            )));
        }
        Ok(())
    }

    fn eq1_examples<'a>(
        &self,
        batch: &'a [Document],
        snapshot: Option<&'a SnapshotOutputs>,
        lambda: f64,
        temperature: f64,
    ) -> Result<Vec<Example<'a>>> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Validation(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        if !(temperature > 0.0) {
            return Err(Error::Validation(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        batch
            .iter()
            .map(|doc| {
                self.check_features(&doc.features)?;
                let label = doc.label.ok_or_else(|| {
                    Error::Validation(format!("labeled document {} has no label", doc.id))
                })?;
                self.check_label(label)?;
                let soft = match snapshot {
                    Some(snap) => Some(snap.get(&doc.id)?.probs()),
                    None if lambda == 0.0 => None,
                    None => {
                        return Err(Error::Contract(
                            "snapshot required when lambda > 0".into(),
                        ))
                    }
                };
                Ok(Example {
                    features: &doc.features,
                    hard: Some(label),
                    hard_weight: 1.0 - lambda,
                    soft,
                    soft_weight: lambda,
                    temperature,
                    weight: 1.0,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    b1: usize,
    w2: usize,
    b2: usize,
}

pub fn param_count(dim: usize, classes: usize, hidden: usize) -> usize {
    if hidden > 0 {
        hidden * dim + hidden + classes * hidden + classes
    } else {
        classes * dim + classes
    }
}

/// One term of the training objective:
/// `weight * (hard_weight * CE(y, softmax(z)) + soft_weight * CE(q, softmax(z / T)))`.
#[derive(Debug, Clone, Copy)]
struct Example<'a> {
    features: &'a [f64],
    hard: Option<usize>,
    hard_weight: f64,
    soft: Option<&'a [f64]>,
    soft_weight: f64,
    temperature: f64,
    weight: f64,
}

impl<'a> Example<'a> {
    fn soft(features: &'a [f64], target: &'a [f64], temperature: f64) -> Self {
        Example {
            features,
            hard: None,
            hard_weight: 0.0,
            soft: Some(target),
            soft_weight: 1.0,
            temperature,
            weight: 1.0,
        }
    }

    fn hard(features: &'a [f64], label: usize, weight: f64) -> Self {
        Example {
            features,
            hard: Some(label),
            hard_weight: 1.0,
            soft: None,
            soft_weight: 0.0,
            temperature: 1.0,
            weight,
        }
    }
}

/// A distillation example: features and a target distribution.
#[derive(Debug, Clone, Copy)]
pub struct SoftExample<'a> {
    pub features: &'a [f64],
    pub target: &'a Distribution,
}

/// A hard-label example with a loss weight.
#[derive(Debug, Clone, Copy)]
pub struct HardExample<'a> {
    pub features: &'a [f64],
    pub label: usize,
    pub weight: f64,
}

fn check_target(target: &Distribution, classes: usize) -> Result<()> {
    if target.len() != classes {
        return Err(Error::Validation(format!(
            "target has {} classes, model has {classes}",
            target.len()
        )));
    }
    Ok(())
}

/// Mean mixed objective over a labeled batch:
/// `(1 - λ) CE(y, softmax(z)) + λ CE(q, softmax(z / T))`. For two classes the
/// multinomial form coincides with the binomial one.
pub fn loss_eq1(
    state: &ClassifierState,
    batch: &[Document],
    snapshot: &SnapshotOutputs,
    lambda: f64,
    temperature: f64,
) -> Result<f64> {
    let examples = state.eq1_examples(batch, Some(snapshot), lambda, temperature)?;
    Ok(state.objective(&examples, None))
}

/// Exact gradient of [`loss_eq1`].
pub fn grad_loss_eq1(
    state: &ClassifierState,
    batch: &[Document],
    snapshot: &SnapshotOutputs,
    lambda: f64,
    temperature: f64,
) -> Result<Gradient> {
    let examples = state.eq1_examples(batch, Some(snapshot), lambda, temperature)?;
    let mut grad = vec![0.0; state.param_count()];
    state.objective(&examples, Some(&mut grad));
    Ok(Gradient(grad))
}

/// Mean weighted hard-label cross entropy.
pub fn loss_hard(state: &ClassifierState, data: &[HardExample<'_>]) -> Result<f64> {
    let examples = data
        .iter()
        .map(|h| {
            state.check_features(h.features)?;
            state.check_label(h.label)?;
            Ok(Example::hard(h.features, h.label, h.weight))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(state.objective(&examples, None))
}

/// Mean distillation cross entropy at `temperature`.
pub fn loss_soft(
    state: &ClassifierState,
    sequence: &[SoftExample<'_>],
    temperature: f64,
) -> Result<f64> {
    let examples = sequence
        .iter()
        .map(|s| {
            state.check_features(s.features)?;
            check_target(s.target, state.classes)?;
            Ok(Example::soft(s.features, s.target.probs(), temperature))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(state.objective(&examples, None))
}

/// Tempered outputs frozen just before finetuning, keyed by document id.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotOutputs {
    temperature: f64,
    entries: BTreeMap<String, Distribution>,
}

impl SnapshotOutputs {
    pub fn capture(state: &ClassifierState, labeled: &[Document], temperature: f64) -> Result<Self> {
        let entries = labeled
            .iter()
            .map(|doc| Ok((doc.id.clone(), state.forward(&doc.features, temperature)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(SnapshotOutputs {
            temperature,
            entries,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Distribution)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn get(&self, id: &str) -> Result<&Distribution> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::Contract(format!("snapshot has no entry for document {id}")))
    }

    /// SHA-256 over ids and raw probability bits.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.temperature.to_bits().to_le_bytes());
        for (id, dist) in &self.entries {
            hasher.update((id.len() as u64).to_le_bytes());
            hasher.update(id.as_bytes());
            for p in dist.probs() {
                hasher.update(p.to_bits().to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }

    fn check_covers(&self, labeled: &[Document]) -> Result<()> {
        if labeled.len() != self.entries.len() {
            return Err(Error::Contract(format!(
                "snapshot covers {} documents but the labeled set has {}",
                self.entries.len(),
                labeled.len()
            )));
        }
        for doc in labeled {
            self.get(&doc.id)?;
        }
        Ok(())
    }
}

/// Stores `forward(state, x, T)` for every labeled document.
pub fn capture_snapshot(
    state: &ClassifierState,
    labeled: &[Document],
    temperature: f64,
) -> Result<SnapshotOutputs> {
    SnapshotOutputs::capture(state, labeled, temperature)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logits.iter().map(|z| (z - max) / temperature).collect();
    let lse = scaled.iter().map(|s| s.exp()).sum::<f64>().ln();
    scaled.iter().map(|s| s - lse).collect()
}

fn cross_entropy(target: &[f64], log_probs: &[f64]) -> f64 {
    -target
        .iter()
        .zip(log_probs)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, lp)| t * lp)
        .sum::<f64>()
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
