use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::{EmbedError, EmbeddingProvider, UnitEmbeddingSequence};

/// Padding marker for trigrams that run past either end of the text.
const PAD: char = '\u{2}';

/// Deterministic offline provider with one unit per character.
///
/// The vector of character `i` is the signed-hash bag of the three character
/// trigrams covering `i` (with padding at the text edges), L2-normalized.
/// Characters sharing trigram context therefore get similar vectors, which
/// makes spans that differ only in a suffix land close together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrigramHashProvider {
    dim: usize,
    seed: u64,
}

impl TrigramHashProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn bucket(&self, gram: &[char]) -> (usize, f64) {
        let mut buf = [0u8; 12];
        let mut len = 0;
        for c in gram {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let h = xxh3_64_with_seed(&buf[..len], self.seed);
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        ((h % self.dim as u64) as usize, sign)
    }
}

impl Default for TrigramHashProvider {
    fn default() -> Self {
        Self::new(128, 0)
    }
}

impl EmbeddingProvider for TrigramHashProvider {
    fn model_id(&self) -> String {
        format!("trigram-hash/d{}/s{}", self.dim, self.seed)
    }

    fn embed(&self, text: &str) -> Result<UnitEmbeddingSequence, EmbedError> {
        let mut padded = vec![PAD, PAD];
        padded.extend(text.chars());
        padded.extend([PAD, PAD]);
        let n = padded.len() - 4;
        let mut vectors = Vec::with_capacity(n);
        for i in 0..n {
            let mut v = vec![0.0; self.dim];
            // trigrams starting at i, i+1, i+2 in padded coordinates all cover char i
            for k in 0..3 {
                let (idx, sign) = self.bucket(&padded[i + k..i + k + 3]);
                v[idx] += sign;
            }
            // an odd number of ±1 terms can never cancel to zero
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut v {
                *x /= norm;
            }
            vectors.push(v);
        }
        Ok(UnitEmbeddingSequence {
            dim: self.dim,
            unit_spans: (0..n).map(|i| (i, i + 1)).collect(),
            vectors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{cosine_distance, embed_text, pool_span};
    use std::collections::BTreeSet;

    fn full(p: &TrigramHashProvider, t: &str) -> Vec<f64> {
        let s = embed_text(t, p).unwrap();
        pool_span(&s, (0, t.chars().count())).unwrap().vector
    }

    #[test]
    fn one_unit_per_character() {
        let s = embed_text("abc", &TrigramHashProvider::new(8, 1)).unwrap();
        assert_eq!(s.unit_spans, vec![(0, 1), (1, 2), (2, 3)]);
        assert!(s.vectors.iter().all(|v| v.len() == 8));
        let s = embed_text("ñ€", &TrigramHashProvider::new(64, 1)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.vectors[0].len(), 64);
    }

    #[test]
    fn vectors_are_unit_length() {
        let s = embed_text("lur idorretan", &TrigramHashProvider::default()).unwrap();
        for v in &s.vectors {
            let n: f64 = v.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let p = TrigramHashProvider::new(32, 7);
        assert_eq!(p.embed("lur idorretan").unwrap(), p.embed("lur idorretan").unwrap());
        assert_ne!(
            p.embed("lur idorretan").unwrap(),
            TrigramHashProvider::new(32, 8).embed("lur idorretan").unwrap()
        );
    }

    fn trigrams(t: &str) -> BTreeSet<String> {
        let c: Vec<char> = t.chars().collect();
        c.windows(3).map(|w| w.iter().collect()).collect()
    }

    #[test]
    fn shared_trigrams_mean_smaller_distance() {
        // etxea/etxean share etx, txe, xea; etxea/mendi share none
        assert_eq!(trigrams("etxea").intersection(&trigrams("etxean")).count(), 3);
        assert_eq!(trigrams("etxea").intersection(&trigrams("mendi")).count(), 0);
        let p = TrigramHashProvider::new(128, 0);
        let base = full(&p, "etxea");
        let near = cosine_distance(&base, &full(&p, "etxean")).unwrap();
        let far = cosine_distance(&base, &full(&p, "mendi")).unwrap();
        assert!(near < far, "{near} vs {far}");
    }
}
