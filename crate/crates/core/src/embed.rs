//! Text encoders.
//!
//! Every text in the system (hyperedge descriptions, entity definitions,
//! serialized cases and queries) goes through one [`Embedder`], so all vectors
//! share a single semantic space and can be compared by cosine.

use thiserror::Error;

use crate::hash::fnv1a64;
use crate::text::tokens;

pub const DEFAULT_DIM: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("text has no alphanumeric tokens")]
    NoTokens,
    #[error("embedding backend error: {0}")]
    Backend(String),
}

/// Maps text to an L2-normalized vector of fixed dimension.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;

    /// Stable identifier recorded in provenance.
    fn id(&self) -> String;
}

/// Deterministic feature-hashing embedder.
///
/// Each lowercase alphanumeric token is hashed with FNV-1a; the hash selects a
/// bucket (`hash % dim`) and a sign (the top bit), contributions are summed and
/// the result is L2-normalized. Texts with overlapping vocabularies land close
/// together, which is all the tests and the bundled fixtures need.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    /// # Panics
    ///
    /// If `dim` is zero.
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(DEFAULT_DIM)
    }
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = vec![0.0; self.dim];
        let toks = tokens(text);
        if toks.is_empty() {
            return Err(EmbedError::NoTokens);
        }
        for t in toks {
            let h = fnv1a64(t.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Every token cancelled out; fall back on the unsigned counts.
            for t in tokens(text) {
                let h = fnv1a64(t.as_bytes());
                v[(h % self.dim as u64) as usize] += 1.0;
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            return Ok(v);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }

    fn id(&self) -> String {
        format!("hashing-fnv1a-{}", self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::cosine;

    #[test]
    fn unit_norm_and_deterministic() {
        let e = HashingEmbedder::default();
        let a = e.embed("Absence seizures show 3 Hz spike-wave").unwrap();
        let b = e.embed("Absence seizures show 3 Hz spike-wave").unwrap();
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let e = HashingEmbedder::default();
        assert_eq!(e.embed("Spike-Wave").unwrap(), e.embed("spike wave").unwrap());
    }

    #[test]
    fn overlap_orders_similarity() {
        let e = HashingEmbedder::default();
        let q = e.embed("slow alpha rhythm in dementia").unwrap();
        let near = e.embed("alpha rhythm slowing is seen in dementia").unwrap();
        let far = e.embed("sleep spindles during stage two").unwrap();
        assert!(cosine(&q, &near).unwrap() > cosine(&q, &far).unwrap());
    }

    #[test]
    fn empty_text_errors() {
        assert_eq!(HashingEmbedder::default().embed(" -- "), Err(EmbedError::NoTokens));
    }
}
