//! Entropy-based primitives used to rank pseudo-label candidates.
//!
//! Everything here works in nats. Normalized entropy is base-invariant, so the
//! only quantity whose scale depends on the logarithm is the generalized
//! Jensen-Shannon distance, and therefore the smoothing factor of [`score`].
//!
//! | Function | Value |
//! |----------|-------|
//! | [`shannon_entropy`] | `H(p) = -Σ p ln p` with `0 ln 0 = 0` |
//! | [`normalized_entropy`] | `H(p) / ln n`, in `[0, 1]` |
//! | [`gjs`] | `H(mean) - mean(H(p_i))` |
//! | [`score`] | `(Π(1 - Ĥ(p_i)) + α) / (GJS + α)` |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over `n >= 2` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 classes, got {}",
                probs.len()
            )));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} is {p}, expected a finite non-negative value"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Distribution(probs))
    }

    /// Uniform distribution over `n` classes.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    /// Point mass on `class`.
    pub fn one_hot(n: usize, class: usize) -> Result<Self> {
        if class >= n {
            return Err(Error::Validation(format!(
                "class {class} out of range for {n} classes"
            )));
        }
        let mut probs = vec![0.0; n];
        probs[class] = 1.0;
        Self::new(probs)
    }

    /// `softmax(logits / temperature)`.
    pub fn from_logits(logits: &[f64], temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::Validation(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Self::new(softmax(logits, temperature))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max_prob(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Distribution::new(probs)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.0
    }
}

impl AsRef<[f64]> for Distribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Numerically stable `softmax(logits / temperature)` without validation.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .map(|z| ((z - max) / temperature).exp())
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Smoothing factor of the candidate score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub alpha: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams { alpha: 1e-4 }
    }
}

impl ScoreParams {
    pub fn new(alpha: f64) -> Result<Self> {
        let params = ScoreParams { alpha };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Validation(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

fn entropy_of(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Shannon entropy in nats.
pub fn shannon_entropy(p: &Distribution) -> f64 {
    entropy_of(p.probs())
}

/// Shannon entropy divided by `ln n`.
pub fn normalized_entropy(p: &Distribution) -> Result<f64> {
    let n = p.len();
    if n < 2 {
        return Err(Error::Validation(
            "normalized entropy needs at least 2 classes".into(),
        ));
    }
    Ok((shannon_entropy(p) / (n as f64).ln()).clamp(0.0, 1.0))
}

/// Element-wise mean of equally sized distributions.
pub fn mean_distribution(dists: &[Distribution]) -> Result<Distribution> {
    let n = check_same_length(dists)?;
    let m = dists.len() as f64;
    let mut mean = vec![0.0; n];
    for d in dists {
        for (acc, p) in mean.iter_mut().zip(d.probs()) {
            *acc += p;
        }
    }
    mean.iter_mut().for_each(|p| *p /= m);
    Distribution::new(mean)
}

fn check_same_length(dists: &[Distribution]) -> Result<usize> {
    let first = dists
        .first()
        .ok_or_else(|| Error::Validation("empty distribution list".into()))?;
    let n = first.len();
    if let Some(bad) = dists.iter().find(|d| d.len() != n) {
        return Err(Error::Validation(format!(
            "distribution lengths differ: {n} vs {}",
            bad.len()
        )));
    }
    Ok(n)
}

/// Generalized Jensen-Shannon distance of `m >= 2` distributions, in nats.
pub fn gjs(dists: &[Distribution]) -> Result<f64> {
    if dists.len() < 2 {
        return Err(Error::Validation(format!(
            "GJS needs at least 2 distributions, got {}",
            dists.len()
        )));
    }
    let mean = mean_distribution(dists)?;
    // Mean KL divergence to the mixture, written as a sum of non-negative
    // terms so near-identical members do not cancel catastrophically.
    let total: f64 = dists
        .iter()
        .map(|d| {
            d.probs()
                .iter()
                .zip(mean.probs())
                .filter(|(_, &m)| m > 0.0)
                .map(|(&p, &m)| m * bregman_term((p - m) / m))
                .sum::<f64>()
        })
        .sum();
    Ok(total / dists.len() as f64)
}

/// `r ln r - r + 1` at `r = 1 + d`.
fn bregman_term(d: f64) -> f64 {
    if d <= -1.0 {
        return 1.0;
    }
    if d.abs() < 0.1 {
        // sum over k >= 2 of (-d)^k / (k (k - 1))
        let mut power = d * d;
        let mut acc = 0.0;
        for k in 2..40 {
            let term = power / (k * (k - 1)) as f64;
            acc += term;
            if term.abs() < 1e-18 * acc.abs() {
                break;
            }
            power *= -d;
        }
        return acc;
    }
    let r = 1.0 + d;
    (r * r.ln() - r + 1.0).max(0.0)
}

/// Candidate score: high when every classifier is confident and the
/// classifiers agree with each other. Always positive.
pub fn score(dists: &[Distribution], params: &ScoreParams) -> Result<f64> {
    params.validate()?;
    let divergence = gjs(dists)?;
    let entropies = dists
        .iter()
        .map(normalized_entropy)
        .collect::<Result<Vec<_>>>()?;
    Ok(combine(&entropies, divergence, params.alpha))
}

/// Score from precomputed normalized entropies and GJS.
fn combine(normalized_entropies: &[f64], divergence: f64, alpha: f64) -> f64 {
    let confidence: f64 = normalized_entropies.iter().map(|h| 1.0 - h).product();
    (confidence + alpha) / (divergence + alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(p: &[f64]) -> Distribution {
        Distribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn entropy_fixtures() {
        assert_eq!(shannon_entropy(&d(&[1.0, 0.0])), 0.0);
        assert!((shannon_entropy(&d(&[0.5, 0.5])) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((shannon_entropy(&d(&[0.9, 0.1])) - 0.325_082_973_391_448_2).abs() < 1e-12);
    }

    #[test]
    fn normalized_entropy_fixtures() {
        assert_eq!(normalized_entropy(&Distribution::uniform(4).unwrap()).unwrap(), 1.0);
        for n in 2..8 {
            assert_eq!(normalized_entropy(&Distribution::one_hot(n, n - 1).unwrap()).unwrap(), 0.0);
        }
        assert!((normalized_entropy(&d(&[0.9, 0.1])).unwrap() - 0.468_995_593_589_281_2).abs() < 1e-12);
    }

    #[test]
    fn gjs_fixtures() {
        assert_eq!(gjs(&[d(&[0.3, 0.7]), d(&[0.3, 0.7])]).unwrap(), 0.0);
        assert!((gjs(&[d(&[1.0, 0.0]), d(&[0.0, 1.0])]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((gjs(&[d(&[0.9, 0.1]), d(&[0.8, 0.2])]).unwrap() - 0.009_966_389_341_172_812).abs() < 1e-12);
    }

    #[test]
    fn score_fixtures() {
        let params = ScoreParams::default();
        let hot = Distribution::one_hot(2, 0).unwrap();
        assert_eq!(score(&[hot.clone(), hot], &params).unwrap(), 10001.0);
        let uni = Distribution::uniform(2).unwrap();
        assert_eq!(score(&[uni.clone(), uni], &params).unwrap(), 1.0);
        let s = score(&[d(&[0.9, 0.1]), d(&[0.8, 0.2])], &params).unwrap();
        assert!((s - 14.678_292_474_689_738).abs() < 1e-9, "{s}");
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![1.5, -0.5]).is_err());
        assert!(Distribution::new(vec![1.0]).is_err());
        assert!(Distribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(gjs(&[d(&[0.5, 0.5])]).is_err());
        assert!(gjs(&[d(&[0.5, 0.5]), d(&[0.2, 0.3, 0.5])]).is_err());
        assert!(ScoreParams::new(0.0).is_err());
        assert!(score(&[d(&[0.5, 0.5]), d(&[0.5, 0.5])], &ScoreParams { alpha: -1.0 }).is_err());
    }

    #[test]
    fn sum_tolerance_accepts_softmax_rounding() {
        assert!(Distribution::new(vec![0.5 + 5e-10, 0.5]).is_ok());
        assert!(Distribution::new(vec![0.5 + 5e-9, 0.5]).is_err());
    }

    #[test]
    fn from_logits_matches_direct_evaluation() {
        let p = Distribution::from_logits(&[2.0, 0.0], 2.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p.probs()[0] - e / (e + 1.0)).abs() < 1e-15);
        assert_eq!(Distribution::from_logits(&[0.0, 0.0], 7.0).unwrap().probs(), &[0.5, 0.5]);
        assert!(Distribution::from_logits(&[0.0, 0.0], 0.0).is_err());
    }

    fn simplex(n: usize) -> impl Strategy<Value = Distribution> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("degenerate", |raw| {
            let total: f64 = raw.iter().sum();
            (total > 1e-6).then(|| Distribution::new(raw.iter().map(|x| x / total).collect()).ok())?
        })
    }

    fn any_simplex() -> impl Strategy<Value = Distribution> {
        prop_oneof![simplex(2), simplex(3), simplex(4), simplex(10)]
    }

    fn family() -> impl Strategy<Value = Vec<Distribution>> {
        (prop_oneof![Just(2usize), Just(3), Just(4), Just(10)], 2usize..6)
            .prop_flat_map(|(n, m)| prop::collection::vec(simplex(n), m))
    }

    proptest! {
        #[test]
        fn normalized_entropy_in_unit_interval(p in any_simplex()) {
            let h = normalized_entropy(&p).unwrap();
            prop_assert!((0.0..=1.0).contains(&h));
        }

        #[test]
        fn gjs_non_negative_and_permutation_invariant(dists in family()) {
            let g = gjs(&dists).unwrap();
            prop_assert!(g >= 0.0);
            let mut rev = dists.clone();
            rev.reverse();
            prop_assert!((gjs(&rev).unwrap() - g).abs() < 1e-12);
        }

        #[test]
        fn gjs_zero_for_repeated_member(p in any_simplex(), m in 2usize..6) {
            prop_assert!(gjs(&vec![p; m]).unwrap() < 1e-12);
        }

        #[test]
        fn score_positive_and_permutation_invariant(dists in family()) {
            let params = ScoreParams::default();
            let s = score(&dists, &params).unwrap();
            prop_assert!(s > 0.0);
            let mut rotated = dists.clone();
            rotated.rotate_left(1);
            let r = score(&rotated, &params).unwrap();
            prop_assert!((s - r).abs() <= 1e-9 * s.max(1.0));
        }

        #[test]
        fn score_monotone_in_each_component(
            hs in prop::collection::vec(0.0f64..1.0, 2..6),
            g in 0.0f64..2.0,
            dg in 1e-3f64..1.0,
            which in 0usize..6,
            drop in 1e-3f64..1.0,
        ) {
            let alpha = 1e-4;
            let base = combine(&hs, g, alpha);
            prop_assert!(combine(&hs, g + dg, alpha) < base);
            let i = which % hs.len();
            let mut sharper = hs.clone();
            sharper[i] = (hs[i] - drop).max(0.0);
            let others_confident = hs.iter().enumerate().all(|(j, h)| j == i || *h < 1.0);
            if sharper[i] < hs[i] && others_confident {
                prop_assert!(combine(&sharper, g, alpha) > base);
            }
        }
    }

    #[test]
    fn score_uses_one_code_path_for_any_class_count() {
        let params = ScoreParams::default();
        let two = [d(&[0.9, 0.1]), d(&[0.8, 0.2])];
        // Padding with zero-probability classes changes only the ln n normalizer.
        let four = [d(&[0.9, 0.1, 0.0, 0.0]), d(&[0.8, 0.2, 0.0, 0.0])];
        assert!((gjs(&two).unwrap() - gjs(&four).unwrap()).abs() < 1e-15);
        let s4 = score(&four, &params).unwrap();
        let h = |p: &Distribution| shannon_entropy(p) / 4f64.ln();
        let expected = ((1.0 - h(&four[0])) * (1.0 - h(&four[1])) + 1e-4) / (gjs(&four).unwrap() + 1e-4);
        assert!((s4 - expected).abs() < 1e-12);
    }
}
