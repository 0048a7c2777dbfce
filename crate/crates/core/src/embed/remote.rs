//! Remote embedding service client, replay cache, and length limiting.

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingProvider, UnitEmbeddingSequence};
use crate::cache::{AppendCache, Keyed};
use crate::text::CharIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub text: String,
    pub model: String,
    #[serde(flatten)]
    pub sequence: UnitEmbeddingSequence,
}

impl Keyed for EmbeddingRecord {
    type Key = (String, String);
    fn key(&self) -> (String, String) {
        (self.text.clone(), self.model.clone())
    }
}

pub type EmbeddingCache = AppendCache<EmbeddingRecord>;

/// Serves embeddings from a cache, falling back to `inner` on a miss and
/// recording the answer.
pub struct CachedProvider<P> {
    inner: P,
    cache: EmbeddingCache,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn new(inner: P, cache: EmbeddingCache) -> Self {
        Self { inner, cache }
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn model_id(&self) -> String {
        self.inner.model_id()
    }

    fn embed(&self, text: &str) -> Result<UnitEmbeddingSequence, EmbedError> {
        let key = (text.to_string(), self.inner.model_id());
        if let Some(rec) = self.cache.get(&key) {
            return Ok(rec.sequence);
        }
        let sequence = self.inner.embed(text)?;
        sequence.validate()?;
        self.cache
            .append(EmbeddingRecord {
                text: key.0,
                model: key.1,
                sequence: sequence.clone(),
            })
            .map_err(|e| EmbedError::Provider(format!("cannot append to embedding cache: {e}")))?;
        Ok(sequence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OverLengthPolicy {
    /// Refuse texts over the limit.
    #[default]
    Fail,
    /// Embed whitespace-delimited chunks separately and concatenate.
    Split,
}

/// Enforces a provider's maximum input length.
pub struct LengthLimited<P> {
    inner: P,
    max_chars: usize,
    policy: OverLengthPolicy,
}

impl<P: EmbeddingProvider> LengthLimited<P> {
    pub fn new(inner: P, max_chars: usize, policy: OverLengthPolicy) -> Self {
        assert!(max_chars > 0);
        Self {
            inner,
            max_chars,
            policy,
        }
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for LengthLimited<P> {
    fn model_id(&self) -> String {
        format!("{}|max{}:{:?}", self.inner.model_id(), self.max_chars, self.policy)
    }

    fn embed(&self, text: &str) -> Result<UnitEmbeddingSequence, EmbedError> {
        let idx = CharIndex::new(text);
        let len = idx.len();
        if len <= self.max_chars {
            return self.inner.embed(text);
        }
        if self.policy == OverLengthPolicy::Fail {
            return Err(EmbedError::TooLong {
                len,
                limit: self.max_chars,
            });
        }
        let chars: Vec<char> = text.chars().collect();
        let mut out: Option<UnitEmbeddingSequence> = None;
        let mut start = 0;
        while start < len {
            let mut end = (start + self.max_chars).min(len);
            if end < len {
                // back off to the last whitespace so words stay whole
                if let Some(ws) = (start + 1..end).rev().find(|&i| chars[i].is_whitespace()) {
                    end = ws;
                }
            }
            let piece = idx.slice(start, end).expect("in-bounds chunk");
            if !piece.trim().is_empty() {
                let seq = self.inner.embed(piece)?;
                let acc = out.get_or_insert_with(|| UnitEmbeddingSequence {
                    dim: seq.dim,
                    unit_spans: Vec::new(),
                    vectors: Vec::new(),
                });
                if acc.dim != seq.dim {
                    return Err(EmbedError::DimensionMismatch(acc.dim, seq.dim));
                }
                acc.unit_spans
                    .extend(seq.unit_spans.iter().map(|&(s, e)| (s + start, e + start)));
                acc.vectors.extend(seq.vectors);
            }
            start = end;
        }
        out.ok_or(EmbedError::EmptyText)
    }
}

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use serde::{Deserialize, Serialize};

    use super::super::{EmbedError, EmbeddingProvider, UnitEmbeddingSequence};
    use crate::httpc;
    use crate::translate::RetryPolicy;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct HttpEmbeddingConfig {
        pub endpoint: String,
        /// Pinned model identifier, sent with every request.
        pub model: String,
        #[serde(default, skip_serializing)]
        pub auth_token: Option<String>,
        #[serde(default = "default_timeout")]
        pub timeout_secs: u64,
    }

    fn default_timeout() -> u64 {
        60
    }

    #[derive(Serialize)]
    struct Request<'a> {
        texts: [&'a str; 1],
        model: &'a str,
    }

    #[derive(Deserialize)]
    struct Response {
        embeddings: Vec<UnitEmbeddingSequence>,
    }

    /// Client for an embedding service speaking `{texts, model}` →
    /// `{embeddings: [{dim, unit_spans, vectors}]}`.
    pub struct HttpEmbeddingProvider {
        config: HttpEmbeddingConfig,
        agent: ureq::Agent,
        retry: RetryPolicy,
    }

    impl HttpEmbeddingProvider {
        pub fn new(config: HttpEmbeddingConfig, retry: RetryPolicy) -> Self {
            let agent = httpc::agent(Duration::from_secs(config.timeout_secs));
            Self { config, agent, retry }
        }
    }

    impl EmbeddingProvider for HttpEmbeddingProvider {
        fn model_id(&self) -> String {
            self.config.model.clone()
        }

        fn embed(&self, text: &str) -> Result<UnitEmbeddingSequence, EmbedError> {
            let body = Request {
                texts: [text],
                model: &self.config.model,
            };
            let resp: Response = self
                .retry
                .run(|| {
                    httpc::post_json(
                        &self.agent,
                        &self.config.endpoint,
                        self.config.auth_token.as_deref(),
                        &body,
                    )
                })
                .map_err(|e| EmbedError::Provider(e.message))?;
            let mut it = resp.embeddings.into_iter();
            match (it.next(), it.next()) {
                (Some(seq), None) => Ok(seq),
                _ => Err(EmbedError::Provider("expected exactly one embedding per text".into())),
            }
        }
    }
}

#[cfg(feature = "http")]
pub use http::{HttpEmbeddingConfig, HttpEmbeddingProvider};
