//! Unit-level text embeddings, span pooling, and cosine distance.
//!
//! A provider maps a text to one vector per unit (subword or character)
//! together with the code-point span each unit covers. Spans are embedded
//! by averaging the vectors of every unit they overlap.

mod remote;
mod trigram;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{CachedProvider, EmbeddingCache, EmbeddingRecord, LengthLimited, OverLengthPolicy};
#[cfg(feature = "http")]
pub use remote::{HttpEmbeddingConfig, HttpEmbeddingProvider};
pub use trigram::TrigramHashProvider;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("span ({0}, {1}) overlaps no embedding unit")]
    EmptyPool(usize, usize),
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("provider returned an invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("text of {len} characters exceeds the provider limit of {limit}")]
    TooLong { len: usize, limit: usize },
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitEmbeddingSequence {
    pub dim: usize,
    pub unit_spans: Vec<(usize, usize)>,
    pub vectors: Vec<Vec<f64>>,
}

impl UnitEmbeddingSequence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Checks the sequence invariants: matching lengths, uniform dimension,
    /// finite components, ordered non-overlapping spans.
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: String| Err(EmbedError::InvalidSequence(m));
        if self.vectors.len() != self.unit_spans.len() {
            return bad(format!(
                "{} vectors for {} unit spans",
                self.vectors.len(),
                self.unit_spans.len()
            ));
        }
        let mut prev_end = 0;
        for (i, (&(s, e), v)) in self.unit_spans.iter().zip(&self.vectors).enumerate() {
            if v.len() != self.dim {
                return bad(format!("unit {i} has dimension {} (expected {})", v.len(), self.dim));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("unit {i} has a non-finite component"));
            }
            if s >= e || s < prev_end {
                return bad(format!("unit {i} span ({s}, {e}) is empty or out of order"));
            }
            prev_end = e;
        }
        Ok(())
    }

    /// Indices `lo..hi` of the units overlapping `[start, end)`.
    pub fn overlapping(&self, start: usize, end: usize) -> std::ops::Range<usize> {
        let lo = self.unit_spans.partition_point(|&(_, e)| e <= start);
        let hi = self.unit_spans.partition_point(|&(s, _)| s < end);
        lo..hi.max(lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanEmbedding {
    pub vector: Vec<f64>,
    pub span: (usize, usize),
}

/// Source of unit embeddings. Implementations must be pure functions of the
/// text and their configuration.
pub trait EmbeddingProvider: Send + Sync {
    /// Pins model and configuration; used as a cache key.
    fn model_id(&self) -> String;

    fn embed(&self, text: &str) -> Result<UnitEmbeddingSequence, EmbedError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn model_id(&self) -> String {
        (**self).model_id()
    }

    fn embed(&self, text: &str) -> Result<UnitEmbeddingSequence, EmbedError> {
        (**self).embed(text)
    }
}

pub fn embed_text(text: &str, provider: &dyn EmbeddingProvider) -> Result<UnitEmbeddingSequence, EmbedError> {
    if text.is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let seq = provider.embed(text)?;
    seq.validate()?;
    Ok(seq)
}

/// Sum of `vectors[range]`, accumulated front to back.
pub(crate) fn sum_into(acc: &mut [f64], v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

pub fn pool_span(seq: &UnitEmbeddingSequence, span: (usize, usize)) -> Result<SpanEmbedding, EmbedError> {
    let range = seq.overlapping(span.0, span.1);
    if range.is_empty() {
        return Err(EmbedError::EmptyPool(span.0, span.1));
    }
    let n = range.len() as f64;
    let mut acc = vec![0.0; seq.dim];
    for v in &seq.vectors[range] {
        sum_into(&mut acc, v);
    }
    for a in &mut acc {
        *a /= n;
    }
    Ok(SpanEmbedding { vector: acc, span })
}

pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((1.0 - dot / (nu.sqrt() * nv.sqrt())).clamp(0.0, 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(vectors: Vec<Vec<f64>>) -> UnitEmbeddingSequence {
        let n = vectors.len();
        UnitEmbeddingSequence {
            dim: vectors.first().map_or(0, Vec::len),
            unit_spans: (0..n).map(|i| (i, i + 1)).collect(),
            vectors,
        }
    }

    #[test]
    fn pool_of_one_unit_is_that_unit() {
        let s = seq(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(pool_span(&s, (1, 2)).unwrap().vector, vec![3.0, 4.0]);
    }

    #[test]
    fn pool_of_two_units_is_their_mean() {
        let s = seq(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(pool_span(&s, (0, 2)).unwrap().vector, vec![0.5, 0.5]);
    }

    #[test]
    fn pool_uses_overlap_not_containment() {
        let s = UnitEmbeddingSequence {
            dim: 1,
            unit_spans: vec![(0, 3), (4, 8)],
            vectors: vec![vec![2.0], vec![4.0]],
        };
        assert_eq!(pool_span(&s, (2, 5)).unwrap().vector, vec![3.0]);
        assert_eq!(pool_span(&s, (3, 4)), Err(EmbedError::EmptyPool(3, 4)));
        assert_eq!(pool_span(&s, (0, 8)).unwrap().vector, vec![3.0]);
    }

    #[test]
    fn cosine_reference_values() {
        assert!(cosine_distance(&[0.3, -2.0], &[0.3, -2.0]).unwrap().abs() < 1e-15);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(EmbedError::ZeroVector));
        assert_eq!(
            cosine_distance(&[1.0], &[1.0, 0.0]),
            Err(EmbedError::DimensionMismatch(1, 2))
        );
    }

    #[test]
    fn validate_catches_broken_sequences() {
        let mut s = seq(vec![vec![1.0], vec![2.0]]);
        assert!(s.validate().is_ok());
        s.vectors[1] = vec![f64::NAN];
        assert!(s.validate().is_err());
        let mut s = seq(vec![vec![1.0], vec![2.0]]);
        s.unit_spans[1] = (0, 1);
        assert!(s.validate().is_err());
        let mut s = seq(vec![vec![1.0], vec![2.0, 3.0]]);
        s.dim = 1;
        assert!(s.validate().is_err());
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_scale_invariant(u in vec_strategy(6), v in vec_strategy(6), alpha in 0.01f64..100.0) {
            let d = cosine_distance(&u, &v).unwrap();
            prop_assert!((0.0..=2.0).contains(&d));
            prop_assert!((d - cosine_distance(&v, &u).unwrap()).abs() < 1e-12);
            let scaled: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            prop_assert!((d - cosine_distance(&scaled, &v).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn pooling_is_count_weighted_over_partitions(
            vecs in proptest::collection::vec(vec_strategy(3), 2..10),
            cut in 1usize..9,
        ) {
            let s = seq(vecs.clone());
            let n = vecs.len();
            let cut = cut.min(n - 1);
            let whole = pool_span(&s, (0, n)).unwrap().vector;
            let left = pool_span(&s, (0, cut)).unwrap().vector;
            let right = pool_span(&s, (cut, n)).unwrap().vector;
            for k in 0..3 {
                let combined = (left[k] * cut as f64 + right[k] * (n - cut) as f64) / n as f64;
                prop_assert!((whole[k] - combined).abs() < 1e-9);
            }
        }
    }
}
