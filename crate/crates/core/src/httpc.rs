//! Minimal blocking JSON-over-HTTP helper shared by the remote clients.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::translate::ClientError;

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .new_agent()
}

pub(crate) fn post_json<B, R>(agent: &ureq::Agent, url: &str, token: Option<&str>, body: &B) -> Result<R, ClientError>
where
    B: Serialize,
    R: DeserializeOwned,
{
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(t) = token {
        req = req.header("Authorization", &format!("Bearer {t}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| ClientError::transient(format!("POST {url}: {e}")))?;
    let status = resp.status().as_u16();
    if !(200..300).contains(&status) {
        let msg = format!("POST {url}: HTTP {status}");
        return Err(if status == 429 || status >= 500 {
            ClientError::transient(msg)
        } else {
            ClientError::permanent(msg)
        });
    }
    resp.body_mut()
        .read_json()
        .map_err(|e| ClientError::permanent(format!("POST {url}: bad response body: {e}")))
}
