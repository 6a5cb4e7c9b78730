//! Labeling the unlabeled pool, ranking candidates and picking a batch.

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierState;
use crate::data::Document;
use crate::error::{Error, Result};
use crate::infometrics::{self, argmax, mean_distribution, softmax, Distribution, ScoreParams};

/// How agreed candidates are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    /// Confidence over divergence across classifiers; needs `m >= 2`.
    UncertaintyScore,
    /// Largest probability of the mean output distribution.
    MaxConfidence,
    /// Lowest mean Shannon entropy of the member outputs (score is its negation).
    LowEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Position in the unlabeled pool that was scored.
    pub index: usize,
    pub doc_id: String,
    pub hard_label: usize,
    pub mean_logits: Vec<f64>,
    pub score: f64,
    /// `max` of the mean member distribution.
    pub confidence: f64,
    pub agree: bool,
    pub passes_throttle: bool,
}

/// Every document of the pool with its ranking data.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub candidates: Vec<Candidate>,
}

impl Labeling {
    pub fn n_agree(&self) -> usize {
        self.candidates.iter().filter(|c| c.agree).count()
    }

    /// Agreed candidates rejected by the confidence cutoff.
    pub fn n_throttled(&self) -> usize {
        self.candidates
            .iter()
            .filter(|c| c.agree && !c.passes_throttle)
            .count()
    }

    /// Candidates that passed both the agreement filter and the throttle.
    pub fn survivors(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.agree && c.passes_throttle)
    }
}

/// Which pool a batch was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Throttled,
    /// Nothing cleared the cutoff; agreed candidates ignoring the cutoff.
    Agreement,
    /// No classifiers agreed on anything; the whole pool, labeled by the mean.
    Unfiltered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub step: usize,
    pub pool: Pool,
    pub chosen: Vec<Candidate>,
}

/// Per-iteration intake: `min(K, ceil(growth_cap * (|L| + |S|)))`, at least 1.
pub fn step_size(step_cap: usize, growth_cap_fraction: f64, n_labeled: usize, n_pseudo: usize) -> usize {
    let growth = (growth_cap_fraction * (n_labeled + n_pseudo) as f64).ceil() as usize;
    step_cap.min(growth).max(1)
}

/// Scores every unlabeled document from per-member logits
/// (`member_logits[member][doc][class]`).
pub fn score_outputs(
    member_logits: &[Vec<Vec<f64>>],
    unlabeled: &[Document],
    ranking: Ranking,
    params: &ScoreParams,
    confidence_threshold: f64,
) -> Result<Labeling> {
    let m = member_logits.len();
    if m == 0 {
        return Err(Error::Validation("need at least one classifier".into()));
    }
    if ranking == Ranking::UncertaintyScore && m < 2 {
        return Err(Error::Validation(
            "uncertainty score needs at least 2 classifiers".into(),
        ));
    }
    if member_logits.iter().any(|l| l.len() != unlabeled.len()) {
        return Err(Error::Validation("member outputs do not cover the pool".into()));
    }
    let candidates = unlabeled
        .iter()
        .enumerate()
        .map(|(j, doc)| {
            let dists = member_logits
                .iter()
                .map(|logits| Distribution::from_logits(&logits[j], 1.0))
                .collect::<Result<Vec<_>>>()?;
            let first = dists[0].argmax();
            let agree = dists.iter().all(|d| d.argmax() == first);
            let n = member_logits[0][j].len();
            let mut mean_logits = vec![0.0; n];
            for logits in member_logits {
                for (acc, z) in mean_logits.iter_mut().zip(&logits[j]) {
                    *acc += z;
                }
            }
            mean_logits.iter_mut().for_each(|z| *z /= m as f64);
            let confidence = mean_distribution(&dists)?.max_prob();
            let score = match ranking {
                Ranking::UncertaintyScore => infometrics::score(&dists, params)?,
                Ranking::MaxConfidence => confidence,
                Ranking::LowEntropy => {
                    -dists.iter().map(infometrics::shannon_entropy).sum::<f64>() / m as f64
                }
            };
            Ok(Candidate {
                index: j,
                doc_id: doc.id.clone(),
                hard_label: argmax(&softmax(&mean_logits, 1.0)),
                mean_logits,
                score,
                confidence,
                agree,
                passes_throttle: confidence >= confidence_threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Labeling { candidates })
}

/// Runs every classifier over the pool and scores the documents.
pub fn label_and_score(
    classifiers: &[ClassifierState],
    unlabeled: &[Document],
    ranking: Ranking,
    params: &ScoreParams,
    confidence_threshold: f64,
) -> Result<Labeling> {
    let logits = classifiers
        .iter()
        .map(|c| unlabeled.iter().map(|d| c.logits(&d.features)).collect())
        .collect::<Result<Vec<Vec<_>>>>()?;
    score_outputs(&logits, unlabeled, ranking, params, confidence_threshold)
}

/// Highest scores first, ties by ascending document id.
fn rank(pool: Vec<&Candidate>, step: usize) -> Vec<Candidate> {
    let mut pool = pool;
    pool.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
    pool.into_iter().take(step).cloned().collect()
}

/// Takes up to `step` of the best candidates, falling back to wider pools
/// when a narrower one is empty so that a non-empty pool always shrinks.
pub fn select_top(labeling: &Labeling, step: usize) -> Selected {
    let survivors: Vec<&Candidate> = labeling.survivors().collect();
    if !survivors.is_empty() {
        return Selected {
            step,
            pool: Pool::Throttled,
            chosen: rank(survivors, step),
        };
    }
    let agreed: Vec<&Candidate> = labeling.candidates.iter().filter(|c| c.agree).collect();
    if !agreed.is_empty() {
        return Selected {
            step,
            pool: Pool::Agreement,
            chosen: rank(agreed, step),
        };
    }
    Selected {
        step,
        pool: Pool::Unfiltered,
        chosen: rank(labeling.candidates.iter().collect(), step),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(n: usize) -> Vec<Document> {
        (0..n).map(|i| Document::new(format!("u{i:02}"), vec![0.0], None)).collect()
    }

    fn logits_for(p: f64) -> Vec<f64> {
        // Logits whose softmax is [p, 1 - p].
        vec![(p / (1.0 - p)).ln(), 0.0]
    }

    fn candidate(id: &str, score: f64) -> Candidate {
        Candidate {
            index: 0,
            doc_id: id.into(),
            hard_label: 0,
            mean_logits: vec![0.0, 0.0],
            score,
            confidence: 1.0,
            agree: true,
            passes_throttle: true,
        }
    }

    #[test]
    fn identical_one_hot_members_score_max() {
        let big = vec![vec![vec![800.0, 0.0]]; 2];
        let l = score_outputs(&big, &docs(1), Ranking::UncertaintyScore, &ScoreParams::default(), 0.9).unwrap();
        let c = &l.candidates[0];
        assert!(c.agree && c.passes_throttle);
        assert_eq!(c.score, 10001.0);
        assert_eq!(c.hard_label, 0);
    }

    #[test]
    fn disagreement_is_excluded() {
        let out = vec![vec![logits_for(0.95)], vec![logits_for(0.05)]];
        let l = score_outputs(&out, &docs(1), Ranking::UncertaintyScore, &ScoreParams::default(), 0.9).unwrap();
        assert!(!l.candidates[0].agree);
        assert_eq!(l.survivors().count(), 0);
        assert_eq!(l.n_agree(), 0);
    }

    #[test]
    fn throttle_rejects_low_confidence() {
        let out = vec![vec![logits_for(0.6)], vec![logits_for(0.6)]];
        let l = score_outputs(&out, &docs(1), Ranking::UncertaintyScore, &ScoreParams::default(), 0.9).unwrap();
        assert!(l.candidates[0].agree);
        assert!(!l.candidates[0].passes_throttle);
        assert_eq!(l.n_throttled(), 1);
    }

    #[test]
    fn mean_logits_and_label() {
        let out = vec![vec![vec![3.0, 1.0, 0.0]], vec![vec![1.0, 0.0, 0.5]]];
        let l = score_outputs(&out, &docs(1), Ranking::MaxConfidence, &ScoreParams::default(), 0.0).unwrap();
        assert_eq!(l.candidates[0].mean_logits, vec![2.0, 0.5, 0.25]);
        assert_eq!(l.candidates[0].hard_label, 0);
    }

    #[test]
    fn uncertainty_score_needs_two_members() {
        let out = vec![vec![logits_for(0.9)]];
        assert!(score_outputs(&out, &docs(1), Ranking::UncertaintyScore, &ScoreParams::default(), 0.9).is_err());
        assert!(score_outputs(&out, &docs(1), Ranking::MaxConfidence, &ScoreParams::default(), 0.9).is_ok());
    }

    #[test]
    fn top_three_of_ten() {
        let candidates = (0..10).map(|i| candidate(&format!("u{i}"), i as f64)).collect();
        let s = select_top(&Labeling { candidates }, 3);
        let scores: Vec<f64> = s.chosen.iter().map(|c| c.score).collect();
        assert_eq!(scores, vec![9.0, 8.0, 7.0]);
        assert_eq!(s.pool, Pool::Throttled);
    }

    #[test]
    fn ties_go_to_lower_id() {
        let candidates = vec![candidate("b", 1.0), candidate("a", 1.0), candidate("c", 2.0)];
        let s = select_top(&Labeling { candidates }, 2);
        let ids: Vec<&str> = s.chosen.iter().map(|c| c.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["c", "a"]);
    }

    #[test]
    fn fallback_when_throttle_empties_pool() {
        let mut candidates: Vec<Candidate> = (0..5).map(|i| candidate(&format!("u{i}"), i as f64)).collect();
        candidates.iter_mut().for_each(|c| c.passes_throttle = false);
        let s = select_top(&Labeling { candidates: candidates.clone() }, 2);
        assert_eq!(s.pool, Pool::Agreement);
        assert_eq!(s.chosen.len(), 2);
        candidates.iter_mut().for_each(|c| c.agree = false);
        let s = select_top(&Labeling { candidates }, 2);
        assert_eq!(s.pool, Pool::Unfiltered);
        assert_eq!(s.chosen.len(), 2);
    }

    #[test]
    fn step_rule() {
        assert_eq!(step_size(100, 0.1, 100, 0), 10);
        assert_eq!(step_size(100, 0.1, 100, 5), 11);
        assert_eq!(step_size(100, 0.1, 100, 5000), 100);
        assert_eq!(step_size(100, 0.0, 100, 0), 1);
    }
}
