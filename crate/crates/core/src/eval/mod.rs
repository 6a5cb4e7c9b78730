//! Metrics, curves and the analysis harnesses built on them.

mod harness;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use harness::{
    aggregate, convergence_trace, drift_curve, evaluate, par_map, sweep, Aggregate, SweepParam,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    Accuracy,
    MacroF1,
    /// F1 of class 1, the minority class in the binary benchmarks.
    F1Positive,
}

impl MetricMode {
    pub fn name(self) -> &'static str {
        match self {
            MetricMode::Accuracy => "accuracy",
            MetricMode::MacroF1 => "macro_f1",
            MetricMode::F1Positive => "f1_positive",
        }
    }
}

impl fmt::Display for MetricMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [MetricMode::Accuracy, MetricMode::MacroF1, MetricMode::F1Positive]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown metric {s:?}")))
    }
}

/// `counts[gold][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(predictions: &[usize], gold: &[usize], n_classes: usize) -> Result<Self> {
        if predictions.len() != gold.len() {
            return Err(Error::Validation(format!(
                "{} predictions for {} gold labels",
                predictions.len(),
                gold.len()
            )));
        }
        let mut counts = vec![vec![0u64; n_classes]; n_classes];
        for (&p, &g) in predictions.iter().zip(gold) {
            if p >= n_classes || g >= n_classes {
                return Err(Error::Validation(format!(
                    "label pair ({g}, {p}) outside [0, {n_classes})"
                )));
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, gold: usize, predicted: usize) -> u64 {
        self.counts[gold][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.n_classes()).map(|c| self.counts[c][c]).sum();
        ratio(correct, self.total())
    }

    pub fn precision(&self, class: usize) -> f64 {
        let predicted: u64 = self.counts.iter().map(|row| row[class]).sum();
        ratio(self.counts[class][class], predicted)
    }

    pub fn recall(&self, class: usize) -> f64 {
        ratio(self.counts[class][class], self.counts[class].iter().sum())
    }

    pub fn f1(&self, class: usize) -> f64 {
        let (p, r) = (self.precision(class), self.recall(class));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn macro_f1(&self) -> f64 {
        let n = self.n_classes();
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|c| self.f1(c)).sum::<f64>() / n as f64
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mode: MetricMode,
    pub value: f64,
    pub confusion: ConfusionMatrix,
}

pub fn metrics(predictions: &[usize], gold: &[usize], n_classes: usize, mode: MetricMode) -> Result<MetricReport> {
    let confusion = ConfusionMatrix::new(predictions, gold, n_classes)?;
    let value = match mode {
        MetricMode::Accuracy => confusion.accuracy(),
        MetricMode::MacroF1 => confusion.macro_f1(),
        MetricMode::F1Positive => {
            if n_classes < 2 {
                return Err(Error::Validation("f1_positive needs at least two classes".into()));
            }
            confusion.f1(1)
        }
    };
    Ok(MetricReport { mode, value, confusion })
}

/// One point of a curve. `seed` is `None` on mean curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub variant: String,
    /// Name of the abscissa: `unlabeled`, `lambda`, `sample_ratio`, `m`, `epoch`.
    pub param: String,
    pub x: f64,
    pub seed: Option<u64>,
    pub metric: String,
    pub y: f64,
}

pub const CSV_HEADER: [&str; 6] = ["variant", "param", "value", "seed", "metric", "score"];

/// Writes points as `variant,param,value,seed,metric,score`; mean rows carry
/// `mean` in the seed column. Floats use the shortest round-trip form.
pub fn write_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for p in points {
        let seed = p.seed.map_or_else(|| "mean".to_string(), |s| s.to_string());
        writer.write_record([
            p.variant.as_str(),
            p.param.as_str(),
            &p.x.to_string(),
            &seed,
            p.metric.as_str(),
            &p.y.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let gold = [0, 1, 2, 1, 0];
        let r = metrics(&gold, &gold, 3, MetricMode::MacroF1).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.confusion.accuracy(), 1.0);
    }

    #[test]
    fn binary_hand_counts() {
        // TP=3 FP=1 FN=2 TN=4 for class 1
        let gold = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let pred = [1, 1, 1, 0, 0, 1, 0, 0, 0, 0];
        let m = ConfusionMatrix::new(&pred, &gold, 2).unwrap();
        assert_eq!(m.precision(1), 0.75);
        assert_eq!(m.recall(1), 0.6);
        assert!((m.f1(1) - 2.0 / 3.0).abs() < 1e-15);
        let r = metrics(&pred, &gold, 2, MetricMode::F1Positive).unwrap();
        assert_eq!(r.value, m.f1(1));
    }

    #[test]
    fn single_class_predictor_on_balanced_gold() {
        let gold = [0, 1, 0, 1];
        let r = metrics(&[0; 4], &gold, 2, MetricMode::Accuracy).unwrap();
        assert_eq!(r.value, 0.5);
        // class 1 never predicted: precision 0 by convention, F1 0
        assert_eq!(r.confusion.f1(1), 0.0);
    }

    #[test]
    fn undefined_class_counts_as_zero() {
        let r = metrics(&[0, 1], &[0, 1], 3, MetricMode::MacroF1).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(metrics(&[0], &[0, 1], 2, MetricMode::Accuracy).is_err());
        assert!(metrics(&[2], &[0], 2, MetricMode::Accuracy).is_err());
        assert!("f2".parse::<MetricMode>().is_err());
    }

    #[test]
    fn csv_layout() {
        let points = [
            CurvePoint { variant: "rst_full".into(), param: "lambda".into(), x: 0.3, seed: Some(1), metric: "accuracy".into(), y: 0.5 },
            CurvePoint { variant: "rst_full".into(), param: "lambda".into(), x: 0.3, seed: None, metric: "accuracy".into(), y: 0.25 },
        ];
        let mut buf = Vec::new();
        write_curve_csv(&points, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "variant,param,value,seed,metric,score\nrst_full,lambda,0.3,1,accuracy,0.5\nrst_full,lambda,0.3,mean,accuracy,0.25\n"
        );
    }

    /// Counts per class by brute force over the pairs.
    fn oracle(pred: &[usize], gold: &[usize], n: usize) -> (f64, f64) {
        let mut f1s = Vec::new();
        for c in 0..n {
            let tp = pred.iter().zip(gold).filter(|(p, g)| **p == c && **g == c).count() as f64;
            let fp = pred.iter().zip(gold).filter(|(p, g)| **p == c && **g != c).count() as f64;
            let fn_ = pred.iter().zip(gold).filter(|(p, g)| **p != c && **g == c).count() as f64;
            let p = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
            let r = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
            f1s.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
        }
        let acc = pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / pred.len() as f64;
        (acc, f1s.iter().sum::<f64>() / n as f64)
    }

    fn pairs() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..6).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 1..60)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn matches_brute_force((n, pairs) in pairs()) {
            let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let (acc, f1) = oracle(&pred, &gold, n);
            let m = ConfusionMatrix::new(&pred, &gold, n).unwrap();
            prop_assert_eq!(m.total(), pred.len() as u64);
            prop_assert_eq!(m.accuracy(), acc);
            prop_assert_eq!(m.macro_f1(), f1);
        }

        #[test]
        fn macro_f1_invariant_under_relabeling((n, pairs) in pairs(), shift in 0usize..6) {
            let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let relabel = |c: usize| (c + shift) % n;
            let a = ConfusionMatrix::new(&pred, &gold, n).unwrap().macro_f1();
            let p2: Vec<usize> = pred.iter().map(|&c| relabel(c)).collect();
            let g2: Vec<usize> = gold.iter().map(|&c| relabel(c)).collect();
            let b = ConfusionMatrix::new(&p2, &g2, n).unwrap().macro_f1();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
