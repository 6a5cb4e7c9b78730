//! WebAssembly bindings for the static page in `www/`. Every export takes
//! plain values or JSON and returns a JSON string; failures come back as
//! `{"error": "..."}` so the page never has to catch exceptions.

use rst_core::baselines::{run_variant, Variant, VariantSpec};
use rst_core::data::{inject_distractors, stratified_split, synth, DistractorSpec, Generator, SynthSpec};
use rst_core::infometrics::{gjs, normalized_entropy, score, softmax, Distribution, ScoreParams};
use rst_core::selftrain::RunConfig;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const GRID: usize = 48;

fn respond(result: Result<Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Normalized entropies, GJS and selection score for a list of member
/// distributions given as JSON, e.g. `[[0.9,0.1],[0.8,0.2]]`.
#[wasm_bindgen]
pub fn explore_score(dists_json: &str, alpha: f64) -> String {
    respond(score_report(dists_json, alpha))
}

pub fn score_report(dists_json: &str, alpha: f64) -> Result<Value, String> {
    let raw: Vec<Vec<f64>> = serde_json::from_str(dists_json).map_err(|e| e.to_string())?;
    let dists = raw
        .into_iter()
        .map(|p| {
            let total: f64 = p.iter().sum();
            if !(total > 0.0) {
                return Err("each distribution needs positive mass".to_string());
            }
            Distribution::new(p.iter().map(|v| v / total).collect()).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let entropies = dists
        .iter()
        .map(normalized_entropy)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let divergence = gjs(&dists).map_err(|e| e.to_string())?;
    let s = score(&dists, &ScoreParams { alpha }).map_err(|e| e.to_string())?;
    Ok(json!({
        "distributions": dists.iter().map(|d| d.probs().to_vec()).collect::<Vec<_>>(),
        "normalized_entropy": entropies,
        "gjs": divergence,
        "score": s,
    }))
}

/// Softmax of `logits_json` at each temperature in `temperatures_json`.
#[wasm_bindgen]
pub fn tempered_softmax(logits_json: &str, temperatures_json: &str) -> String {
    respond(softmax_table(logits_json, temperatures_json))
}

pub fn softmax_table(logits_json: &str, temperatures_json: &str) -> Result<Value, String> {
    let logits: Vec<f64> = serde_json::from_str(logits_json).map_err(|e| e.to_string())?;
    let temps: Vec<f64> = serde_json::from_str(temperatures_json).map_err(|e| e.to_string())?;
    if logits.len() < 2 {
        return Err("need at least two logits".into());
    }
    if let Some(t) = temps.iter().find(|t| !(**t > 0.0)) {
        return Err(format!("temperature must be positive, got {t}"));
    }
    let rows: Vec<Value> = temps
        .iter()
        .map(|&t| json!({ "temperature": t, "probs": softmax(&logits, t) }))
        .collect();
    Ok(json!({ "logits": logits, "rows": rows }))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct BlobsRequest {
    pub seed: u64,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
    pub separation: f64,
    pub distractor_fraction: f64,
    pub epochs: usize,
}

impl Default for BlobsRequest {
    fn default() -> Self {
        BlobsRequest {
            seed: 1,
            labeled: 20,
            unlabeled: 200,
            test: 200,
            separation: 2.0,
            distractor_fraction: 0.2,
            epochs: 15,
        }
    }
}

#[derive(Serialize)]
struct Point {
    x: f64,
    y: f64,
    class: usize,
    role: &'static str,
}

/// Trains `rst_full` and `self_train` on a 2-D two-blob corpus and returns
/// the points, test accuracies and both decision maps on a square grid.
#[wasm_bindgen]
pub fn blobs_demo(request_json: &str) -> String {
    respond(blobs(request_json))
}

pub fn blobs(request_json: &str) -> Result<Value, String> {
    let req: BlobsRequest = serde_json::from_str(request_json).map_err(|e| e.to_string())?;
    if req.labeled < 4 || req.unlabeled == 0 || req.test == 0 {
        return Err("need at least 4 labeled, 1 unlabeled and 1 test point".into());
    }
    if req.labeled + req.unlabeled + req.test > 5000 {
        return Err("keep the corpus under 5000 points in the browser".into());
    }
    let err = |e: rst_core::Error| e.to_string();
    let corpus = synth(&SynthSpec {
        generator: Generator::GaussianBlobs,
        n_classes: 2,
        n_samples: req.labeled + req.unlabeled + req.test,
        class_weights: None,
        dim: 2,
        class_separation: req.separation,
        overlap_noise_sigma: 1.0,
        seed: req.seed,
    })
    .map_err(err)?;
    let mut split = stratified_split(&corpus, req.labeled, req.unlabeled, req.test, req.seed).map_err(err)?;
    let distractors = if req.distractor_fraction > 0.0 {
        let spec = DistractorSpec {
            fraction: req.distractor_fraction,
            source_class: 0,
            magnitude: 0.6,
        };
        inject_distractors(&mut split.unlabeled, &split.unlabeled_gold, &spec, req.seed).map_err(err)?
    } else {
        Vec::new()
    };

    let mut config = RunConfig {
        seed: req.seed,
        hidden_width: 8,
        parallel: false,
        ..RunConfig::default()
    };
    config.train.epochs = req.epochs.max(1);

    let mut points: Vec<Point> = Vec::new();
    let mut push = |docs: &[rst_core::data::Document], gold: Option<&[usize]>, role: &'static str| {
        for (i, d) in docs.iter().enumerate() {
            let class = gold.map(|g| g[i]).or(d.label).unwrap_or(0);
            let role = if role == "unlabeled" && distractors.contains(&d.id) { "distractor" } else { role };
            points.push(Point { x: d.features[0], y: d.features[1], class, role });
        }
    };
    push(&split.labeled, None, "labeled");
    push(&split.unlabeled, Some(&split.unlabeled_gold), "unlabeled");
    push(&split.test, None, "test");

    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.x).min(p.y), hi.max(p.x).max(p.y))
    });
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let cell = |k: usize| lo + (k as f64 + 0.5) * (hi - lo) / GRID as f64;

    let mut models = Vec::new();
    for variant in [Variant::RstFull, Variant::SelfTrain] {
        let spec = VariantSpec::new(variant, config.clone());
        let outcome = run_variant(&spec, &split.labeled, &split.unlabeled, 2).map_err(err)?;
        let mut correct = 0;
        for d in &split.test {
            if Some(outcome.model.predict(&d.features).map_err(err)?) == d.label {
                correct += 1;
            }
        }
        let mut grid = Vec::with_capacity(GRID * GRID);
        for row in 0..GRID {
            for col in 0..GRID {
                grid.push(outcome.model.predict(&[cell(col), cell(row)]).map_err(err)?);
            }
        }
        models.push(json!({
            "variant": variant.name(),
            "accuracy": correct as f64 / split.test.len() as f64,
            "iterations": outcome.records.len(),
            "grid": grid,
        }));
    }

    Ok(json!({
        "bounds": [lo, hi],
        "grid_size": GRID,
        "points": points,
        "models": models,
    }))
}
