use std::sync::atomic::{AtomicUsize, Ordering};

use super::{ClientError, MtClient};

/// Returns every text unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityClient;

impl MtClient for IdentityClient {
    fn engine_id(&self) -> String {
        "identity".into()
    }

    fn translate(&self, texts: &[String], _: &str, _: &str) -> Result<Vec<String>, ClientError> {
        Ok(texts.to_vec())
    }
}

/// Serves nothing; every request fails. Paired with a primed cache it makes
/// a run fully offline and fails loudly on any cache miss.
#[derive(Debug, Clone)]
pub struct ReplayOnlyClient {
    engine_id: String,
}

impl ReplayOnlyClient {
    pub fn new(engine_id: impl Into<String>) -> Self {
        Self {
            engine_id: engine_id.into(),
        }
    }
}

impl MtClient for ReplayOnlyClient {
    fn engine_id(&self) -> String {
        self.engine_id.clone()
    }

    fn translate(&self, texts: &[String], _: &str, _: &str) -> Result<Vec<String>, ClientError> {
        Err(ClientError::permanent(format!(
            "replay-only engine `{}`: {} text(s) missing from cache",
            self.engine_id,
            texts.len()
        )))
    }
}

/// Translates each text independently with a closure.
pub struct FnClient<F> {
    engine_id: String,
    f: F,
}

impl<F> FnClient<F>
where
    F: Fn(&str) -> String + Send + Sync,
{
    pub fn new(engine_id: impl Into<String>, f: F) -> Self {
        Self {
            engine_id: engine_id.into(),
            f,
        }
    }
}

impl<F> MtClient for FnClient<F>
where
    F: Fn(&str) -> String + Send + Sync,
{
    fn engine_id(&self) -> String {
        self.engine_id.clone()
    }

    fn translate(&self, texts: &[String], _: &str, _: &str) -> Result<Vec<String>, ClientError> {
        Ok(texts.iter().map(|t| (self.f)(t)).collect())
    }
}

/// Wraps a client and counts requests and texts sent.
pub struct CountingClient<C> {
    inner: C,
    calls: AtomicUsize,
    texts: AtomicUsize,
}

impl<C: MtClient> CountingClient<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
            texts: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn texts_sent(&self) -> usize {
        self.texts.load(Ordering::SeqCst)
    }
}

impl<C: MtClient> MtClient for CountingClient<C> {
    fn engine_id(&self) -> String {
        self.inner.engine_id()
    }

    fn translate(&self, texts: &[String], s: &str, t: &str) -> Result<Vec<String>, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.texts.fetch_add(texts.len(), Ordering::SeqCst);
        self.inner.translate(texts, s, t)
    }
}
