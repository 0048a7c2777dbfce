use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use squad_transfer::embed::{
    CachedProvider, EmbeddingCache, EmbeddingProvider, HttpEmbeddingConfig, HttpEmbeddingProvider, TrigramHashProvider,
};
use squad_transfer::pipeline::{run_pipeline, Components, PipelineConfig};
use squad_transfer::segment::RuleSplitter;
use squad_transfer::synth::{sample_dataset, PerturbingClient};
use squad_transfer::translate::{RetryPolicy, TranslateOptions, TranslationCache};

struct Service {
    url: String,
    hits: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    handle: Option<thread::JoinHandle<()>>,
}

impl Drop for Service {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            h.join().unwrap();
        }
    }
}

/// Embedding server backed by the trigram provider.
fn serve() -> Service {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}/embed", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let stop = Arc::new(AtomicBool::new(false));
    let (h, s) = (hits.clone(), stop.clone());
    let handle = thread::spawn(move || {
        let p = TrigramHashProvider::default();
        while !s.load(Ordering::SeqCst) {
            let Ok(Some(mut req)) = server.recv_timeout(Duration::from_millis(20)) else {
                continue;
            };
            h.fetch_add(1, Ordering::SeqCst);
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let v: serde_json::Value = serde_json::from_str(&body).unwrap();
            assert_eq!(v["model"], "trigram-remote");
            let embeddings: Vec<_> = v["texts"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| p.embed(t.as_str().unwrap()).unwrap())
                .collect();
            let out = serde_json::json!({ "embeddings": embeddings }).to_string();
            req.respond(tiny_http::Response::from_string(out)).unwrap();
        }
    });
    Service {
        url,
        hits,
        stop,
        handle: Some(handle),
    }
}

fn remote(url: &str) -> HttpEmbeddingProvider {
    HttpEmbeddingProvider::new(
        HttpEmbeddingConfig {
            endpoint: url.to_string(),
            model: "trigram-remote".into(),
            auth_token: None,
            timeout_secs: 5,
        },
        RetryPolicy::none(),
    )
}

#[test]
fn remote_embeddings_reproduce_local_alignment_and_replay_offline() {
    let ds = sample_dataset(30, 11);
    let splitter = RuleSplitter::with_default_abbreviations();
    let client = PerturbingClient::new(3);
    let mt = TranslationCache::in_memory();
    let opts = TranslateOptions {
        retry: RetryPolicy::none(),
        ..TranslateOptions::default()
    };
    let config = PipelineConfig::default();
    let local = TrigramHashProvider::default();
    let expected = run_pipeline(
        &ds,
        &config,
        &Components {
            splitter: &splitter,
            client: &client,
            cache: &mt,
            provider: &local,
        },
        &opts,
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("emb.jsonl");
    let service = serve();
    let cached = CachedProvider::new(remote(&service.url), EmbeddingCache::open(&cache_path).unwrap());
    let got = run_pipeline(
        &ds,
        &config,
        &Components {
            splitter: &splitter,
            client: &client,
            cache: &mt,
            provider: &cached,
        },
        &opts,
    )
    .unwrap();
    assert_eq!(got.dataset, expected.dataset);
    assert_eq!(got.drops, expected.drops);
    assert!(service.hits.load(Ordering::SeqCst) > 0);
    let url = service.url.clone();
    drop(service);

    // the server is gone; every embedding must come from the cache
    let replay = CachedProvider::new(remote(&url), EmbeddingCache::open(&cache_path).unwrap());
    let again = run_pipeline(
        &ds,
        &config,
        &Components {
            splitter: &splitter,
            client: &client,
            cache: &mt,
            provider: &replay,
        },
        &opts,
    )
    .unwrap();
    assert_eq!(again.dataset, expected.dataset);
}

#[test]
fn unreachable_service_surfaces_provider_error() {
    let service = serve();
    let url = service.url.clone();
    drop(service);
    let err = remote(&url).embed("kaixo").unwrap_err();
    assert!(err.to_string().contains("embedding provider failed"), "{err}");
}
