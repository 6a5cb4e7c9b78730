use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{Variant, VariantSpec};
use crate::classifier::hex;
use crate::data::{
    inject_distractors, inject_label_noise, load_jsonl, stratified_split, synth, DistractorSpec, Generator,
    HashingVectorizer, JsonlSchema, Split, SynthSpec, DEFAULT_HASH_DIM,
};
use crate::error::{Error, Result};
use crate::eval::MetricMode;
use crate::selftrain::RunConfig;

/// A whole experiment: data, split sizes, method, hyperparameters, seeds and
/// curve grids. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    /// Variants for `compare`.
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_metric")]
    pub metric: MetricMode,
    pub data: DataConfig,
    pub split: SplitSizes,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub curve: CurveConfig,
}

fn default_variant() -> Variant {
    Variant::RstFull
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_metric() -> MetricMode {
    MetricMode::Accuracy
}

/// Exactly one of `synthetic` and `jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jsonl: Option<JsonlData>,
    /// Shift part of the unlabeled pool toward the other classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distractors: Option<DistractorSpec>,
    /// Fraction of labeled documents whose label is flipped.
    #[serde(default)]
    pub label_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub generator: Generator,
    pub n_classes: usize,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<Vec<f64>>,
    pub dim: usize,
    pub class_separation: f64,
    pub overlap_noise_sigma: f64,
    /// Fixed corpus seed; by default each run seed draws its own corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_seed: Option<u64>,
}

impl SyntheticData {
    pub fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            generator: self.generator,
            n_classes: self.n_classes,
            n_samples: self.n_samples,
            class_weights: self.class_weights.clone(),
            dim: self.dim,
            class_separation: self.class_separation,
            overlap_noise_sigma: self.overlap_noise_sigma,
            seed: self.corpus_seed.unwrap_or(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonlData {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    pub n_classes: usize,
    #[serde(default = "default_hash_dim")]
    pub hash_dim: usize,
    #[serde(default = "default_true")]
    pub lowercase: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_pattern: Option<String>,
}

fn default_hash_dim() -> usize {
    DEFAULT_HASH_DIM
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub weight_pseudo: f64,
    pub validation_fraction: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            weight_pseudo: 0.5,
            validation_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    /// Unlabeled pool sizes for the drift curve.
    pub checkpoints: Vec<usize>,
    pub lambda: Vec<f64>,
    pub sample_ratio: Vec<f64>,
    pub m: Vec<f64>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub variants: Vec<Variant>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads, parses and validates a config file. Relative data paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if let Some(jsonl) = &mut config.data.jsonl {
            if jsonl.path.is_relative() {
                if let Some(dir) = path.parent() {
                    jsonl.path = dir.join(&jsonl.path);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &Overrides) -> Result<()> {
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(seeds) = &overrides.seeds {
            self.seeds = seeds.clone();
        }
        if let [one] = overrides.variants.as_slice() {
            self.variant = *one;
        }
        if !overrides.variants.is_empty() {
            self.variants = overrides.variants.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad(format!("duplicate seeds in {:?}", self.seeds));
        }
        let n_classes = match (&self.data.synthetic, &self.data.jsonl) {
            (Some(s), None) => {
                let needed = self.split.labeled + self.split.unlabeled + self.split.test;
                if needed > s.n_samples {
                    return bad(format!("split needs {needed} documents but n_samples is {}", s.n_samples));
                }
                s.spec(0).validate().map_err(|e| Error::Config(e.to_string()))?;
                s.n_classes
            }
            (None, Some(j)) => {
                if !j.hash_dim.is_power_of_two() {
                    return bad(format!("hash_dim must be a power of two, got {}", j.hash_dim));
                }
                j.n_classes
            }
            _ => return bad("data needs exactly one of [data.synthetic] or [data.jsonl]".into()),
        };
        if n_classes < 2 {
            return bad(format!("need at least 2 classes, got {n_classes}"));
        }
        if self.split.labeled == 0 || self.split.test == 0 {
            return bad("labeled and test splits must be non-empty".into());
        }
        if let Some(d) = &self.data.distractors {
            d.validate().map_err(|e| Error::Config(e.to_string()))?;
            if d.source_class >= n_classes {
                return bad(format!("distractor source_class {} out of range", d.source_class));
            }
        }
        if !(0.0..=1.0).contains(&self.data.label_noise) {
            return bad(format!("label_noise must lie in [0, 1], got {}", self.data.label_noise));
        }
        if self.metric == MetricMode::F1Positive && n_classes != 2 {
            return bad("f1_positive is defined for binary data only".into());
        }
        self.spec(self.variant).validate().map_err(|e| Error::Config(e.to_string()))?;
        if !self.curve.checkpoints.windows(2).all(|w| w[0] < w[1]) {
            return bad("curve.checkpoints must be strictly ascending".into());
        }
        if self.curve.checkpoints.last().is_some_and(|&c| c > self.split.unlabeled) {
            return bad("curve.checkpoints exceed split.unlabeled".into());
        }
        Ok(())
    }

    pub fn spec(&self, variant: Variant) -> VariantSpec {
        VariantSpec {
            variant,
            weight_pseudo: self.baseline.weight_pseudo,
            validation_fraction: self.baseline.validation_fraction,
            config: self.run.clone(),
        }
    }

    /// Hash of the effective config without the output directory, so the same
    /// experiment written elsewhere hashes equally.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n_classes(&self) -> usize {
        match (&self.data.synthetic, &self.data.jsonl) {
            (Some(s), _) => s.n_classes,
            (_, Some(j)) => j.n_classes,
            _ => 0,
        }
    }

    /// Corpus, split, label noise and distractors for one seed.
    pub fn prepare(&self, seed: u64) -> Result<Prepared> {
        let corpus = match (&self.data.synthetic, &self.data.jsonl) {
            (Some(s), _) => synth(&s.spec(seed))?,
            (_, Some(j)) => {
                let pattern = j.token_pattern.as_deref().unwrap_or(crate::data::DEFAULT_TOKEN_PATTERN);
                let vectorizer = HashingVectorizer::new(j.hash_dim, j.lowercase, pattern)?;
                load_jsonl(&j.path, &JsonlSchema { n_classes: j.n_classes, vectorizer })?
            }
            _ => return Err(Error::Config("no data source".into())),
        };
        let mut split = stratified_split(&corpus, self.split.labeled, self.split.unlabeled, self.split.test, seed)?;
        if self.data.label_noise > 0.0 {
            split.labeled = inject_label_noise(&split.labeled, split.n_classes, self.data.label_noise, seed)?;
        }
        let distractor_ids = match &self.data.distractors {
            Some(d) => inject_distractors(&mut split.unlabeled, &split.unlabeled_gold, d, seed)?,
            None => Vec::new(),
        };
        Ok(Prepared {
            corpus_fingerprint: corpus.fingerprint(),
            split,
            distractor_ids,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus_fingerprint: String,
    pub split: Split,
    pub distractor_ids: Vec<String>,
}
