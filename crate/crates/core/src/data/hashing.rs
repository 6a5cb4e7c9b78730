//! Signed feature hashing over a bag of words.
//!
//! Tokens are hashed with 64-bit FNV-1a over their UTF-8 bytes. The low bits
//! of the hash pick the bucket (`hash & (dim - 1)`) and bit 63 picks the sign,
//! so collisions cancel in expectation. Vectors are L2-normalized.

use regex::Regex;

use crate::error::{Error, Result};

pub const DEFAULT_HASH_DIM: usize = 1 << 14;
pub const DEFAULT_TOKEN_PATTERN: &str = r"[\p{L}\p{N}]+";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone)]
pub struct HashingVectorizer {
    dim: usize,
    lowercase: bool,
    token_pattern: Regex,
}

impl HashingVectorizer {
    pub fn new(dim: usize, lowercase: bool, token_pattern: &str) -> Result<Self> {
        if !dim.is_power_of_two() {
            return Err(Error::Validation(format!(
                "hash dimension must be a power of two, got {dim}"
            )));
        }
        let token_pattern = Regex::new(token_pattern)
            .map_err(|e| Error::Validation(format!("invalid token pattern: {e}")))?;
        Ok(HashingVectorizer {
            dim,
            lowercase,
            token_pattern,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn transform(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let folded;
        let text = if self.lowercase {
            folded = text.to_lowercase();
            folded.as_str()
        } else {
            text
        };
        let mask = (self.dim - 1) as u64;
        for token in self.token_pattern.find_iter(text) {
            let h = fnv1a64(token.as_str().as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            out[(h & mask) as usize] += sign;
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        }
        out
    }
}

impl Default for HashingVectorizer {
    fn default() -> Self {
        HashingVectorizer::new(DEFAULT_HASH_DIM, true, DEFAULT_TOKEN_PATTERN)
            .expect("default vectorizer settings are valid")
    }
}

/// Featurizes every text with a fresh [`HashingVectorizer`].
pub fn featurize_hashed_bow<S: AsRef<str>>(
    texts: &[S],
    dim: usize,
    lowercase: bool,
    token_pattern: &str,
) -> Result<Vec<Vec<f64>>> {
    let vectorizer = HashingVectorizer::new(dim, lowercase, token_pattern)?;
    Ok(texts.iter().map(|t| vectorizer.transform(t.as_ref())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_test_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
        assert_eq!(fnv1a64(b"hello"), 0xa430d84680aabd0b);
    }

    #[test]
    fn known_bucket_and_sign() {
        // fnv1a64("hello") & 15 = 11 and bit 63 is set.
        let v = HashingVectorizer::new(16, true, DEFAULT_TOKEN_PATTERN).unwrap().transform("Hello");
        let mut expected = vec![0.0; 16];
        expected[11] = -1.0;
        assert_eq!(v, expected);
    }

    #[test]
    fn empty_text_is_zero() {
        let v = HashingVectorizer::default().transform("");
        assert_eq!(v.len(), DEFAULT_HASH_DIM);
        assert!(v.iter().all(|x| *x == 0.0));
        assert!(HashingVectorizer::default().transform(" ,.! ").iter().all(|x| *x == 0.0));
    }

    #[test]
    fn order_invariant_and_normalized() {
        let vecs = featurize_hashed_bow(&["a b", "b a", "a b"], 1024, true, DEFAULT_TOKEN_PATTERN).unwrap();
        assert_eq!(vecs[0], vecs[1]);
        assert_eq!(vecs[0], vecs[2]);
        let norm: f64 = vecs[0].iter().map(|x| x * x).sum::<f64>();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lowercase_flag() {
        let on = HashingVectorizer::new(64, true, DEFAULT_TOKEN_PATTERN).unwrap();
        let off = HashingVectorizer::new(64, false, DEFAULT_TOKEN_PATTERN).unwrap();
        assert_eq!(on.transform("Drug"), on.transform("drug"));
        assert_ne!(off.transform("Drug"), off.transform("drug"));
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(HashingVectorizer::new(1000, true, DEFAULT_TOKEN_PATTERN).is_err());
        assert!(HashingVectorizer::new(16, true, "(").is_err());
    }
}
