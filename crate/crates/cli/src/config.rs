//! TOML configuration and construction of the pipeline backends.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use squad_transfer::align::{AlignConfig, Strategy};
use squad_transfer::compose::ComposeConfig;
use squad_transfer::embed::{
    CachedProvider, EmbeddingCache, EmbeddingProvider, HttpEmbeddingConfig, HttpEmbeddingProvider, LengthLimited,
    OverLengthPolicy, TrigramHashProvider,
};
use squad_transfer::exec::Execution;
use squad_transfer::pipeline::{Components, PipelineConfig};
use squad_transfer::segment::RuleSplitter;
use squad_transfer::synth::PerturbingClient;
use squad_transfer::translate::{
    HttpMtClient, HttpMtConfig, IdentityClient, MtClient, RateLimiter, ReplayOnlyClient, RetryPolicy, TranslateOptions,
    TranslationCache,
};

pub const MT_TOKEN_ENV: &str = "SQUAD_TRANSFER_MT_TOKEN";
pub const EMBEDDING_TOKEN_ENV: &str = "SQUAD_TRANSFER_EMBEDDING_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MtKind {
    #[default]
    Identity,
    Http,
    /// Deterministic corrupting mock, seeded by `--seed`.
    Perturbing,
    /// Serve from the cache only; misses fail.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtSettings {
    pub kind: MtKind,
    pub endpoint: Option<String>,
    /// Cache key component for the http and replay kinds.
    pub engine_id: Option<String>,
    pub batch_size: usize,
    /// Requests per second.
    pub rate_limit: Option<f64>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    pub cache: Option<PathBuf>,
}

impl Default for MtSettings {
    fn default() -> Self {
        Self {
            kind: MtKind::default(),
            endpoint: None,
            engine_id: None,
            batch_size: 32,
            rate_limit: None,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
            cache: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    #[default]
    Trigram,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub seed: u64,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: u64,
    pub max_chars: Option<usize>,
    pub over_length: OverLengthPolicy,
    pub cache: Option<PathBuf>,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::default(),
            dim: 128,
            seed: 0,
            endpoint: None,
            model: None,
            timeout_secs: 60,
            max_chars: None,
            over_length: OverLengthPolicy::default(),
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub source_lang: String,
    pub target_lang: String,
    pub strategy: Strategy,
    pub parallelism: Option<usize>,
    pub artifact_dir: PathBuf,
    pub seed: u64,
    /// One abbreviation per line; the built-in list when unset.
    pub abbreviations: Option<PathBuf>,
    pub mt: MtSettings,
    pub embedding: EmbeddingSettings,
    pub align: AlignConfig,
    pub compose: ComposeConfig,
}

impl Default for Config {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            source_lang: p.source_lang,
            target_lang: p.target_lang,
            strategy: p.strategy,
            parallelism: None,
            artifact_dir: PathBuf::from("artifacts"),
            seed: 0,
            abbreviations: None,
            mt: MtSettings::default(),
            embedding: EmbeddingSettings::default(),
            align: p.align,
            compose: p.compose,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub parallelism: Option<usize>,
    pub artifact_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    /// Reads `path` (if any), resolves its relative paths against the file's
    /// directory, then applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                let mut cfg: Config =
                    toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))?;
                let base = p.parent().unwrap_or(Path::new("."));
                rebase(base, &mut cfg.artifact_dir);
                for p in [&mut cfg.abbreviations, &mut cfg.mt.cache, &mut cfg.embedding.cache]
                    .into_iter()
                    .flatten()
                {
                    rebase(base, p);
                }
                cfg
            }
            None => Config::default(),
        };
        if let Some(n) = overrides.parallelism {
            cfg.parallelism = Some(n);
        }
        if let Some(d) = &overrides.artifact_dir {
            cfg.artifact_dir = d.clone();
        }
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.parallelism == Some(0) {
            bail!("parallelism must be at least 1");
        }
        if let Some(p) = &self.abbreviations {
            if !p.is_file() {
                bail!("abbreviation list {} does not exist", p.display());
            }
        }
        if self.mt.batch_size == 0 {
            bail!("mt.batch_size must be at least 1");
        }
        if self.mt.rate_limit.is_some_and(|r| r.is_nan() || r <= 0.0) {
            bail!("mt.rate_limit must be positive");
        }
        if self.mt.kind == MtKind::Http && self.mt.endpoint.is_none() {
            bail!("mt.kind = \"http\" requires mt.endpoint");
        }
        if self.embedding.kind == EmbeddingKind::Http
            && (self.embedding.endpoint.is_none() || self.embedding.model.is_none())
        {
            bail!("embedding.kind = \"http\" requires embedding.endpoint and embedding.model");
        }
        if self.embedding.dim == 0 {
            bail!("embedding.dim must be at least 1");
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            source_lang: self.source_lang.clone(),
            target_lang: self.target_lang.clone(),
            strategy: self.strategy,
            align: self.align.clone(),
            compose: self.compose.clone(),
        }
    }

    pub fn execution(&self) -> Execution {
        if self.parallelism == Some(1) {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    pub fn translate_options(&self) -> TranslateOptions {
        TranslateOptions {
            batch_size: self.mt.batch_size,
            retry: self.mt.retry,
            rate_limit: self.mt.rate_limit.map(RateLimiter::per_second),
            execution: self.execution(),
        }
    }

    pub fn splitter(&self) -> Result<RuleSplitter> {
        match &self.abbreviations {
            Some(p) => RuleSplitter::from_abbreviation_file(p)
                .with_context(|| format!("cannot read abbreviation list {}", p.display())),
            None => Ok(RuleSplitter::with_default_abbreviations()),
        }
    }

    fn mt_cache_path(&self) -> PathBuf {
        self.mt
            .cache
            .clone()
            .unwrap_or_else(|| self.artifact_dir.join("mt_cache.jsonl"))
    }

    fn embedding_cache_path(&self) -> PathBuf {
        self.embedding
            .cache
            .clone()
            .unwrap_or_else(|| self.artifact_dir.join("embedding_cache.jsonl"))
    }

    pub fn client(&self) -> Result<Box<dyn MtClient>> {
        let m = &self.mt;
        Ok(match m.kind {
            MtKind::Identity => Box::new(IdentityClient),
            MtKind::Perturbing => Box::new(PerturbingClient::new(self.seed)),
            MtKind::Replay => {
                let Some(id) = &m.engine_id else {
                    bail!("mt.kind = \"replay\" requires mt.engine_id");
                };
                Box::new(ReplayOnlyClient::new(id.clone()))
            }
            MtKind::Http => {
                let endpoint = m.endpoint.clone().expect("checked at load");
                Box::new(HttpMtClient::new(HttpMtConfig {
                    engine_id: m.engine_id.clone().unwrap_or_else(|| endpoint.clone()),
                    endpoint,
                    auth_token: std::env::var(MT_TOKEN_ENV).ok(),
                    timeout_secs: m.timeout_secs,
                }))
            }
        })
    }

    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        let e = &self.embedding;
        let base: Box<dyn EmbeddingProvider> = match e.kind {
            EmbeddingKind::Trigram => Box::new(TrigramHashProvider::new(e.dim, e.seed)),
            EmbeddingKind::Http => {
                let path = self.embedding_cache_path();
                ensure_parent(&path)?;
                let cache = EmbeddingCache::open(&path)
                    .with_context(|| format!("cannot open embedding cache {}", path.display()))?;
                let remote = HttpEmbeddingProvider::new(
                    HttpEmbeddingConfig {
                        endpoint: e.endpoint.clone().expect("checked at load"),
                        model: e.model.clone().expect("checked at load"),
                        auth_token: std::env::var(EMBEDDING_TOKEN_ENV).ok(),
                        timeout_secs: e.timeout_secs,
                    },
                    self.mt.retry,
                );
                Box::new(CachedProvider::new(remote, cache))
            }
        };
        Ok(match e.max_chars {
            Some(n) if n > 0 => Box::new(LengthLimited::new(base, n, e.over_length)),
            _ => base,
        })
    }

    pub fn backends(&self) -> Result<Backends> {
        let path = self.mt_cache_path();
        ensure_parent(&path)?;
        let cache = TranslationCache::open(&path)
            .with_context(|| format!("cannot open translation cache {}", path.display()))?;
        for w in cache.warnings() {
            log::warn!("translation cache: {w:?}");
        }
        Ok(Backends {
            splitter: self.splitter()?,
            client: self.client()?,
            cache,
            provider: self.provider()?,
        })
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(())
}

/// Owned pipeline components.
pub struct Backends {
    pub splitter: RuleSplitter,
    pub client: Box<dyn MtClient>,
    pub cache: TranslationCache,
    pub provider: Box<dyn EmbeddingProvider>,
}

impl Backends {
    pub fn components(&self) -> Components<'_> {
        Components {
            splitter: &self.splitter,
            client: self.client.as_ref(),
            cache: &self.cache,
            provider: self.provider.as_ref(),
        }
    }
}
