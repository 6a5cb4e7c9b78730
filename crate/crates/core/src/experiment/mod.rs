//! Config-driven experiments: single runs, variant comparisons and curves,
//! each writing its results under the output directory.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baselines::{run_variant, Variant};
use crate::classifier::hex;
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, convergence_trace, drift_curve, evaluate, par_map, sweep, write_curve_csv, CurvePoint,
    MetricMode, SweepParam,
};
use crate::selftrain::IterationRecord;

pub use config::{
    BaselineConfig, CurveConfig, DataConfig, ExperimentConfig, JsonlData, Overrides, Prepared, SplitSizes,
    SyntheticData,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Drift,
    Lambda,
    Ratio,
    M,
    Convergence,
}

impl FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "drift" => CurveKind::Drift,
            "lambda" => CurveKind::Lambda,
            "ratio" => CurveKind::Ratio,
            "m" => CurveKind::M,
            "convergence" => CurveKind::Convergence,
            _ => {
                return Err(Error::Config(format!(
                    "unknown curve {s:?}; expected drift, lambda, ratio, m or convergence"
                )))
            }
        })
    }
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Drift => "drift",
            CurveKind::Lambda => "lambda",
            CurveKind::Ratio => "ratio",
            CurveKind::M => "m",
            CurveKind::Convergence => "convergence",
        }
    }
}

/// Outcome of one variant on one seed.
#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub config_hash: String,
    pub seed: u64,
    pub variant: Variant,
    pub metrics: BTreeMap<String, f64>,
    pub data_fingerprint: String,
    pub corpus_fingerprint: String,
    pub shared_fingerprint: String,
    pub model_fingerprint: String,
    pub budget_fraction: Option<f64>,
    pub n_distractors: usize,
    pub iterations: Vec<IterationRecord>,
    #[serde(skip)]
    model_file: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config_hash: String,
    pub results: Vec<SeedResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub variant: Variant,
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    pub stdev: f64,
    pub data_fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub config_hash: String,
    pub metric: MetricMode,
    pub rows: Vec<CompareRow>,
    pub table: String,
}

fn reported_modes(n_classes: usize) -> Vec<MetricMode> {
    let mut modes = vec![MetricMode::Accuracy, MetricMode::MacroF1];
    if n_classes == 2 {
        modes.push(MetricMode::F1Positive);
    }
    modes
}

fn prepare_all(config: &ExperimentConfig) -> Result<Vec<(u64, Prepared)>> {
    par_map(&config.seeds, |&seed| config.prepare(seed).map(|p| (seed, p)))
        .into_iter()
        .collect()
}

fn run_cell(config: &ExperimentConfig, hash: &str, variant: Variant, seed: u64, prepared: &Prepared) -> Result<SeedResult> {
    let split = &prepared.split;
    let spec = {
        let mut spec = config.spec(variant);
        spec.config.seed = seed;
        spec
    };
    let outcome = run_variant(&spec, &split.labeled, &split.unlabeled, split.n_classes)?;
    let mut metrics = BTreeMap::new();
    for mode in reported_modes(split.n_classes) {
        let report = evaluate(|x| outcome.model.predict(x), &split.test, split.n_classes, mode)?;
        metrics.insert(mode.to_string(), report.value);
    }
    let model_file = outcome.model.to_model_file(&[
        ("variant", variant.to_string()),
        ("seed", seed.to_string()),
        ("config_hash", hash.to_string()),
    ]);
    Ok(SeedResult {
        config_hash: hash.to_string(),
        seed,
        variant,
        metrics,
        data_fingerprint: split.fingerprint(),
        corpus_fingerprint: prepared.corpus_fingerprint.clone(),
        shared_fingerprint: outcome.shared_fingerprint,
        model_fingerprint: outcome.model.fingerprint(),
        budget_fraction: outcome.budget_fraction,
        n_distractors: prepared.distractor_ids.len(),
        iterations: outcome.records,
        model_file,
    })
}

/// Writes files into one directory and remembers their digests for the
/// manifest.
struct OutputDir<'a> {
    root: &'a Path,
    files: BTreeMap<String, String>,
}

impl<'a> OutputDir<'a> {
    fn create(root: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(OutputDir {
            root,
            files: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.insert(name.to_string(), hex(&Sha256::digest(bytes)));
        Ok(())
    }

    fn finish(mut self, command: &str, config: &ExperimentConfig, extra: serde_json::Value) -> Result<()> {
        let manifest = serde_json::json!({
            "command": command,
            "config_hash": config.hash(),
            "seeds": config.seeds,
            "files": self.files,
            "details": extra,
        });
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        self.write("manifest.json", text.as_bytes())
    }
}

fn points_csv(points: &[CurvePoint]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_curve_csv(points, &mut buf)?;
    Ok(buf)
}

fn report_lines(results: &[SeedResult]) -> Result<String> {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Per-seed metric rows plus one mean row per metric.
fn metric_points(results: &[SeedResult], x: f64) -> Vec<CurvePoint> {
    let mut points: Vec<CurvePoint> = results
        .iter()
        .flat_map(|r| {
            r.metrics.iter().map(move |(metric, y)| CurvePoint {
                variant: r.variant.to_string(),
                param: "unlabeled".into(),
                x,
                seed: Some(r.seed),
                metric: metric.clone(),
                y: *y,
            })
        })
        .collect();
    let means: Vec<CurvePoint> = aggregate(&points).iter().map(|a| a.mean_point()).collect();
    points.extend(means);
    points
}

/// Runs the configured variant once per seed.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let hash = config.hash();
    let prepared = prepare_all(config)?;
    let results = par_map(&prepared, |(seed, p)| run_cell(config, &hash, config.variant, *seed, p))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut out = OutputDir::create(&config.output_dir)?;
    out.write("config.toml", config.to_toml().as_bytes())?;
    out.write("metrics.csv", &points_csv(&metric_points(&results, config.split.unlabeled as f64))?)?;
    out.write("report.jsonl", report_lines(&results)?.as_bytes())?;
    for r in &results {
        out.write(&format!("model-seed{}.ckpt", r.seed), r.model_file.as_bytes())?;
    }
    let details: Vec<_> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "seed": r.seed,
                "variant": r.variant,
                "data_fingerprint": r.data_fingerprint,
                "model_fingerprint": r.model_fingerprint,
            })
        })
        .collect();
    out.finish("run", config, serde_json::Value::Array(details))?;
    Ok(RunSummary {
        config_hash: hash,
        results,
    })
}

/// Runs every variant on the same per-seed splits and tabulates the
/// configured metric.
pub fn cmd_compare(config: &ExperimentConfig) -> Result<CompareSummary> {
    config.validate()?;
    if config.variants.len() < 2 {
        return Err(Error::Config(format!(
            "compare needs at least two variants, got {}",
            config.variants.len()
        )));
    }
    let hash = config.hash();
    let prepared = prepare_all(config)?;
    let cells: Vec<(Variant, usize)> = config
        .variants
        .iter()
        .flat_map(|&v| (0..prepared.len()).map(move |s| (v, s)))
        .collect();
    let results = par_map(&cells, |&(v, s)| run_cell(config, &hash, v, prepared[s].0, &prepared[s].1))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let data_fingerprint = {
        let mut hasher = Sha256::new();
        for (_, p) in &prepared {
            hasher.update(p.split.fingerprint().as_bytes());
        }
        hex(&hasher.finalize())
    };
    let metric = config.metric.to_string();
    let rows: Vec<CompareRow> = config
        .variants
        .iter()
        .map(|&v| {
            let per_seed: Vec<(u64, f64)> = results
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| (r.seed, r.metrics[&metric]))
                .collect();
            let n = per_seed.len() as f64;
            let mean = per_seed.iter().map(|(_, y)| y).sum::<f64>() / n;
            let stdev = if per_seed.len() > 1 {
                (per_seed.iter().map(|(_, y)| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            CompareRow {
                variant: v,
                per_seed,
                mean,
                stdev,
                data_fingerprint: data_fingerprint.clone(),
            }
        })
        .collect();

    let mut table = String::new();
    let _ = writeln!(table, "{:<18} {:>10} {:>10} {:>6}  data", "variant", metric, "stdev", "seeds");
    for row in &rows {
        let _ = writeln!(
            table,
            "{:<18} {:>10.4} {:>10.4} {:>6}  {}",
            row.variant.to_string(),
            row.mean,
            row.stdev,
            row.per_seed.len(),
            &row.data_fingerprint[..12]
        );
    }

    let mut out = OutputDir::create(&config.output_dir)?;
    out.write("config.toml", config.to_toml().as_bytes())?;
    let points: Vec<CurvePoint> = metric_points(&results, config.split.unlabeled as f64);
    out.write("comparison.csv", &points_csv(&points)?)?;
    out.write("comparison.txt", table.as_bytes())?;
    out.write("report.jsonl", report_lines(&results)?.as_bytes())?;
    out.finish("compare", config, serde_json::to_value(&rows)?)?;
    Ok(CompareSummary {
        config_hash: hash,
        metric: config.metric,
        rows,
        table,
    })
}

/// Drift curve, one of the three sensitivity sweeps, or the convergence
/// traces of `rst_full` against `rst_plain_ce`.
pub fn cmd_curve(config: &ExperimentConfig, kind: CurveKind) -> Result<Vec<CurvePoint>> {
    config.validate()?;
    let spec = config.spec(config.variant);
    let missing = match kind {
        CurveKind::Drift if config.curve.checkpoints.is_empty() => Some("checkpoints"),
        CurveKind::Lambda if config.curve.lambda.is_empty() => Some("lambda"),
        CurveKind::Ratio if config.curve.sample_ratio.is_empty() => Some("sample_ratio"),
        CurveKind::M if config.curve.m.is_empty() => Some("m"),
        _ => None,
    };
    if let Some(what) = missing {
        return Err(Error::Config(format!("curve.{what} is empty")));
    }
    let prepared = prepare_all(config)?;
    let splits: Vec<(u64, crate::data::Split)> = prepared.iter().map(|(s, p)| (*s, p.split.clone())).collect();
    let mode = config.metric;
    let with_means = |points: Vec<CurvePoint>| {
        let means: Vec<CurvePoint> = aggregate(&points).iter().map(|a| a.mean_point()).collect();
        points.into_iter().chain(means).collect::<Vec<_>>()
    };
    let points = match kind {
        CurveKind::Drift => drift_curve(&spec, &splits, &config.curve.checkpoints, mode)?,
        CurveKind::Lambda => with_means(sweep(SweepParam::Lambda, &config.curve.lambda, &spec, &splits, mode)?),
        CurveKind::Ratio => with_means(sweep(SweepParam::SampleRatio, &config.curve.sample_ratio, &spec, &splits, mode)?),
        CurveKind::M => with_means(sweep(SweepParam::M, &config.curve.m, &spec, &splits, mode)?),
        CurveKind::Convergence => {
            let mut all = convergence_trace(&config.spec(Variant::RstFull), &splits, mode)?;
            all.extend(convergence_trace(&config.spec(Variant::RstPlainCe), &splits, mode)?);
            with_means(all)
        }
    };
    let mut out = OutputDir::create(&config.output_dir)?;
    out.write("config.toml", config.to_toml().as_bytes())?;
    out.write(&format!("curve-{}.csv", kind.name()), &points_csv(&points)?)?;
    let fingerprints: Vec<_> = splits
        .iter()
        .map(|(seed, s)| serde_json::json!({"seed": seed, "data_fingerprint": s.fingerprint()}))
        .collect();
    out.finish(&format!("curve {}", kind.name()), config, serde_json::Value::Array(fingerprints))?;
    Ok(points)
}
