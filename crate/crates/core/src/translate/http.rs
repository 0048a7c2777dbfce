use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ClientError, MtClient};
use crate::httpc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpMtConfig {
    pub endpoint: String,
    /// Identifies engine and model in the cache key.
    pub engine_id: String,
    #[serde(default, skip_serializing)]
    pub auth_token: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Serialize)]
struct Request<'a> {
    texts: &'a [String],
    source_lang: &'a str,
    target_lang: &'a str,
}

#[derive(Deserialize)]
struct Response {
    translations: Vec<String>,
}

/// Client for an MT service speaking
/// `{texts, source_lang, target_lang}` → `{translations}`.
pub struct HttpMtClient {
    config: HttpMtConfig,
    agent: ureq::Agent,
}

impl HttpMtClient {
    pub fn new(config: HttpMtConfig) -> Self {
        let agent = httpc::agent(Duration::from_secs(config.timeout_secs));
        Self { config, agent }
    }
}

impl MtClient for HttpMtClient {
    fn engine_id(&self) -> String {
        self.config.engine_id.clone()
    }

    fn translate(&self, texts: &[String], source_lang: &str, target_lang: &str) -> Result<Vec<String>, ClientError> {
        let resp: Response = httpc::post_json(
            &self.agent,
            &self.config.endpoint,
            self.config.auth_token.as_deref(),
            &Request {
                texts,
                source_lang,
                target_lang,
            },
        )?;
        Ok(resp.translations)
    }
}
