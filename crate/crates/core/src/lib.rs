//! Robust self-training for text classification with few labels.
//!
//! Pseudo-labels are not mixed into the labeled set. Each round trains fresh
//! classifiers by distilling the stored pseudo-labels (newest rounds first,
//! oldest last) and then finetuning on the gold labels with a penalty that
//! keeps the outputs near the distilled snapshot. Candidates are ranked by a
//! score that rewards low entropy and penalizes disagreement between
//! classifiers trained on different subsamples.
//!
//! Modules:
//! - [`infometrics`]: entropy, generalized Jensen-Shannon distance, the candidate score
//! - [`classifier`]: a small softmax network with tempered outputs and the mixed objective
//! - [`selftrain`]: the self-training loop
//! - [`baselines`]: plain self-training, tri-training and ablations
//! - [`data`]: corpora, hashing featurizer, synthetic benchmarks, splits
//! - [`eval`]: metrics, drift curves, sweeps, convergence traces
//! - [`experiment`]: config-driven `run` / `compare` / `curve` commands

pub mod baselines;
pub mod classifier;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod infometrics;
pub mod rng;
pub mod selftrain;

pub use error::{Error, Result};
