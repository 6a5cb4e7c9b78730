use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{metrics, CurvePoint, MetricMode, MetricReport};
use crate::baselines::{run_variant, run_variant_traced, VariantSpec};
use crate::classifier::ClassifierState;
use crate::data::{Document, Split};
use crate::error::{Error, Result};
use crate::selftrain::RunConfig;

/// Scores a predictor on labeled test documents.
pub fn evaluate<P>(predict: P, test: &[Document], n_classes: usize, mode: MetricMode) -> Result<MetricReport>
where
    P: Fn(&[f64]) -> Result<usize>,
{
    let mut predictions = Vec::with_capacity(test.len());
    let mut gold = Vec::with_capacity(test.len());
    for doc in test {
        let label = doc
            .label
            .ok_or_else(|| Error::Validation(format!("test document {} has no label", doc.id)))?;
        predictions.push(predict(&doc.features)?);
        gold.push(label);
    }
    metrics(&predictions, &gold, n_classes, mode)
}

/// Maps `f` over `items` on all available cores. Output order follows the
/// input, so results do not depend on scheduling.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut indexed: Vec<(usize, R)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break done;
                        }
                        done.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    indexed.sort_unstable_by_key(|(i, _)| *i);
    indexed.into_iter().map(|(_, r)| r).collect()
}

fn with_seed(spec: &VariantSpec, seed: u64) -> VariantSpec {
    let mut spec = spec.clone();
    spec.config.seed = seed;
    spec
}

/// Final-model metric with the unlabeled pool cut to each checkpoint size,
/// one curve per `(seed, split)` followed by the mean curve.
pub fn drift_curve(
    spec: &VariantSpec,
    splits: &[(u64, Split)],
    checkpoints: &[usize],
    mode: MetricMode,
) -> Result<Vec<CurvePoint>> {
    if checkpoints.is_empty() {
        return Err(Error::Validation("drift curve needs at least one checkpoint".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(format!("checkpoints must be strictly ascending, got {checkpoints:?}")));
    }
    for (seed, split) in splits {
        let last = *checkpoints.last().unwrap();
        if last > split.unlabeled.len() {
            return Err(Error::Validation(format!(
                "checkpoint {last} exceeds the {} unlabeled documents of seed {seed}",
                split.unlabeled.len()
            )));
        }
    }
    let cells: Vec<(usize, usize)> = (0..splits.len())
        .flat_map(|s| checkpoints.iter().map(move |&c| (s, c)))
        .collect();
    let points = par_map(&cells, |&(s, c)| {
        let (seed, split) = &splits[s];
        let truncated = split.truncate_unlabeled(c);
        let out = run_variant(&with_seed(spec, *seed), &truncated.labeled, &truncated.unlabeled, split.n_classes)?;
        let report = evaluate(|x| out.model.predict(x), &split.test, split.n_classes, mode)?;
        Ok(CurvePoint {
            variant: spec.variant.to_string(),
            param: "unlabeled".into(),
            x: c as f64,
            seed: Some(*seed),
            metric: mode.to_string(),
            y: report.value,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let means = aggregate(&points).into_iter().map(|a| a.mean_point());
    Ok(points.iter().cloned().chain(means).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    SampleRatio,
    /// Number of classifiers `m`.
    M,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::SampleRatio => "sample_ratio",
            SweepParam::M => "m",
        }
    }

    pub fn apply(self, config: &mut RunConfig, value: f64) -> Result<()> {
        match self {
            SweepParam::Lambda => config.train.lambda = value,
            SweepParam::SampleRatio => config.sample_ratio = value,
            SweepParam::M => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::Validation(format!("classifier count must be a whole number, got {value}")));
                }
                config.classifiers = value as usize;
            }
        }
        config.validate()
    }
}

/// Runs the variant once per `(value, seed)` cell; rows are ordered by value
/// then seed.
pub fn sweep(
    param: SweepParam,
    values: &[f64],
    spec: &VariantSpec,
    splits: &[(u64, Split)],
    mode: MetricMode,
) -> Result<Vec<CurvePoint>> {
    if values.is_empty() {
        return Err(Error::Validation(format!("{} sweep has no values", param.name())));
    }
    let mut cells = Vec::with_capacity(values.len() * splits.len());
    for &value in values {
        for s in 0..splits.len() {
            let mut cell = with_seed(spec, splits[s].0);
            param.apply(&mut cell.config, value)?;
            cells.push((value, s, cell));
        }
    }
    par_map(&cells, |(value, s, cell)| {
        let (seed, split) = &splits[*s];
        let out = run_variant(cell, &split.labeled, &split.unlabeled, split.n_classes)?;
        let report = evaluate(|x| out.model.predict(x), &split.test, split.n_classes, mode)?;
        Ok(CurvePoint {
            variant: spec.variant.to_string(),
            param: param.name().into(),
            x: *value,
            seed: Some(*seed),
            metric: mode.to_string(),
            y: report.value,
        })
    })
    .into_iter()
    .collect()
}

/// Per-epoch training loss and test metric of the final classifier, one
/// trace per seed.
pub fn convergence_trace(spec: &VariantSpec, splits: &[(u64, Split)], mode: MetricMode) -> Result<Vec<CurvePoint>> {
    let traces = par_map(splits, |(seed, split)| {
        let mut points = Vec::new();
        let mut failure = None;
        let variant = spec.variant.to_string();
        let on_epoch = |epoch: usize, loss: f64, state: &ClassifierState| {
            let x = (epoch + 1) as f64;
            match evaluate(|f| state.predict(f), &split.test, split.n_classes, mode) {
                Ok(report) => {
                    for (metric, y) in [("loss".to_string(), loss), (mode.to_string(), report.value)] {
                        points.push(CurvePoint {
                            variant: variant.clone(),
                            param: "epoch".into(),
                            x,
                            seed: Some(*seed),
                            metric,
                            y,
                        });
                    }
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        };
        run_variant_traced(&with_seed(spec, *seed), &split.labeled, &split.unlabeled, split.n_classes, on_epoch)?;
        match failure {
            Some(e) => Err(e),
            None => Ok(points),
        }
    });
    let mut all = Vec::new();
    for trace in traces {
        all.extend(trace?);
    }
    Ok(all)
}

/// Mean and sample standard deviation over seeds of one curve position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: String,
    pub param: String,
    pub x: f64,
    pub metric: String,
    pub mean: f64,
    pub stdev: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn mean_point(&self) -> CurvePoint {
        CurvePoint {
            variant: self.variant.clone(),
            param: self.param.clone(),
            x: self.x,
            seed: None,
            metric: self.metric.clone(),
            y: self.mean,
        }
    }
}

/// Groups per-seed points by `(variant, param, x, metric)` in first-seen
/// order. Points without a seed are ignored.
pub fn aggregate(points: &[CurvePoint]) -> Vec<Aggregate> {
    let mut groups: Vec<(&CurvePoint, Vec<f64>)> = Vec::new();
    for p in points.iter().filter(|p| p.seed.is_some()) {
        let key = |q: &CurvePoint| q.variant == p.variant && q.param == p.param && q.x == p.x && q.metric == p.metric;
        match groups.iter_mut().find(|(head, _)| key(head)) {
            Some((_, ys)) => ys.push(p.y),
            None => groups.push((p, vec![p.y])),
        }
    }
    groups
        .into_iter()
        .map(|(head, ys)| {
            let n = ys.len();
            let mean = ys.iter().sum::<f64>() / n as f64;
            let stdev = if n > 1 {
                (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            Aggregate {
                variant: head.variant.clone(),
                param: head.param.clone(),
                x: head.x,
                metric: head.metric.clone(),
                mean,
                stdev,
                n,
            }
        })
        .collect()
}
