//! Machine translation behind a persistent replay cache.
//!
//! The engine itself is external; [`MtClient`] is the seam. Every text that
//! is translated successfully is appended to a [`TranslationCache`], so a
//! run with a primed cache never touches the network.

mod client;
#[cfg(feature = "http")]
mod http;

use std::collections::HashMap;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{AppendCache, Keyed};
use crate::exec::Execution;

pub use client::{CountingClient, FnClient, IdentityClient, ReplayOnlyClient};
#[cfg(feature = "http")]
pub use http::{HttpMtClient, HttpMtConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub source_text: String,
    pub target_text: String,
    pub source_lang: String,
    pub target_lang: String,
    pub engine_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TranslationKey {
    pub source_text: String,
    pub source_lang: String,
    pub target_lang: String,
    pub engine_id: String,
}

impl Keyed for TranslationRecord {
    type Key = TranslationKey;
    fn key(&self) -> TranslationKey {
        TranslationKey {
            source_text: self.source_text.clone(),
            source_lang: self.source_lang.clone(),
            target_lang: self.target_lang.clone(),
            engine_id: self.engine_id.clone(),
        }
    }
}

pub type TranslationCache = AppendCache<TranslationRecord>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{message}")]
pub struct ClientError {
    pub message: String,
    /// Transient failures (timeouts, 5xx, 429) are retried; others are not.
    pub retryable: bool,
}

impl ClientError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

pub trait MtClient: Send + Sync {
    /// Stable identifier of the engine and model; part of the cache key.
    fn engine_id(&self) -> String;

    /// Translate `texts`, returning exactly one output per input, in order.
    fn translate(&self, texts: &[String], source_lang: &str, target_lang: &str) -> Result<Vec<String>, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Backoff before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    pub fn run<T, F>(&self, mut op: F) -> Result<T, ClientError>
    where
        F: FnMut() -> Result<T, ClientError>,
    {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable && attempt < self.max_retries => {
                    log::debug!("retrying after transient error: {e}");
                    thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Spaces requests at least `1 / per_second` apart across all workers.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Self {
        Self {
            interval: Duration::from_secs_f64(1.0 / rate.max(1e-9)),
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

#[derive(Debug)]
pub struct TranslateOptions {
    pub batch_size: usize,
    pub retry: RetryPolicy,
    pub rate_limit: Option<RateLimiter>,
    pub execution: Execution,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            retry: RetryPolicy::default(),
            rate_limit: None,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Translation {
    pub text: String,
    /// The engine returned nothing; `text` is the original.
    pub untranslated: bool,
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum TranslateError {
    #[error("text {index}: translation failed: {message}")]
    Client { index: usize, message: String },
    #[error("text {index}: engine returned {got} translations for a batch of {expected}")]
    Protocol { index: usize, expected: usize, got: usize },
    #[error("text {index}: cannot append to translation cache: {message}")]
    Cache { index: usize, message: String },
}

/// Translate `texts`, serving cache hits locally and fetching misses in
/// batches. Failures are reported per text; `out[i]` belongs to `texts[i]`.
pub fn translate_batch(
    texts: &[String],
    source_lang: &str,
    target_lang: &str,
    client: &dyn MtClient,
    cache: &TranslationCache,
    opts: &TranslateOptions,
) -> Vec<Result<Translation, TranslateError>> {
    let engine_id = client.engine_id();
    let key = |t: &str| TranslationKey {
        source_text: t.to_string(),
        source_lang: source_lang.to_string(),
        target_lang: target_lang.to_string(),
        engine_id: engine_id.clone(),
    };

    // unique misses, in first-seen order
    let mut misses: Vec<&str> = Vec::new();
    let mut seen = HashMap::new();
    for t in texts {
        if t.is_empty() || cache.contains(&key(t)) || seen.contains_key(t.as_str()) {
            continue;
        }
        seen.insert(t.as_str(), misses.len());
        misses.push(t);
    }

    let chunks: Vec<&[&str]> = misses.chunks(opts.batch_size.max(1)).collect();
    let fetched: Vec<Result<Vec<String>, ChunkError>> = opts.execution.map(&chunks, |chunk| {
        let owned: Vec<String> = chunk.iter().map(|s| s.to_string()).collect();
        let out = opts
            .retry
            .run(|| {
                if let Some(rl) = &opts.rate_limit {
                    rl.acquire();
                }
                client.translate(&owned, source_lang, target_lang)
            })
            .map_err(|e| ChunkError::Client(e.message))?;
        if out.len() != owned.len() {
            return Err(ChunkError::Protocol {
                expected: owned.len(),
                got: out.len(),
            });
        }
        Ok(out)
    });

    let mut fresh: HashMap<&str, Result<Translation, ChunkError>> = HashMap::new();
    for (chunk, res) in chunks.iter().zip(fetched) {
        match res {
            Ok(outs) => {
                for (src, tgt) in chunk.iter().zip(outs) {
                    if tgt.trim().is_empty() {
                        log::warn!("engine returned an empty translation; keeping source text");
                        fresh.insert(
                            src,
                            Ok(Translation {
                                text: src.to_string(),
                                untranslated: true,
                            }),
                        );
                        continue;
                    }
                    let record = TranslationRecord {
                        source_text: src.to_string(),
                        target_text: tgt.clone(),
                        source_lang: source_lang.to_string(),
                        target_lang: target_lang.to_string(),
                        engine_id: engine_id.clone(),
                    };
                    let r = cache
                        .append(record)
                        .map(|_| Translation {
                            text: tgt,
                            untranslated: false,
                        })
                        .map_err(|e| ChunkError::Cache(e.to_string()));
                    fresh.insert(src, r);
                }
            }
            Err(e) => {
                for src in chunk.iter() {
                    fresh.insert(src, Err(e.clone()));
                }
            }
        }
    }

    texts
        .iter()
        .enumerate()
        .map(|(index, t)| {
            if t.is_empty() {
                return Ok(Translation {
                    text: String::new(),
                    untranslated: true,
                });
            }
            if let Some(rec) = cache.get(&key(t)) {
                return Ok(Translation {
                    text: rec.target_text,
                    untranslated: false,
                });
            }
            match fresh.get(t.as_str()) {
                Some(Ok(tr)) => Ok(tr.clone()),
                Some(Err(e)) => Err(e.at(index)),
                None => Err(TranslateError::Client {
                    index,
                    message: "no translation produced".into(),
                }),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
enum ChunkError {
    Client(String),
    Protocol { expected: usize, got: usize },
    Cache(String),
}

impl ChunkError {
    fn at(&self, index: usize) -> TranslateError {
        match self {
            ChunkError::Client(m) => TranslateError::Client {
                index,
                message: m.clone(),
            },
            ChunkError::Protocol { expected, got } => TranslateError::Protocol {
                index,
                expected: *expected,
                got: *got,
            },
            ChunkError::Cache(m) => TranslateError::Cache {
                index,
                message: m.clone(),
            },
        }
    }
}
