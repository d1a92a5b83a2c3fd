//! Minimal blocking JSON client for the REST API.

use std::time::Duration;

use serde_json::Value;
use ureq::http::{Method, Request};
use ureq::Agent;

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub location: Option<String>,
    /// Parsed body, `Value::Null` when empty or not JSON.
    pub body: Value,
}

impl Reply {
    /// Machine code of an error body.
    pub fn code(&self) -> Option<&str> {
        self.body.get("code").and_then(Value::as_str)
    }
}

pub struct Client {
    base: String,
    agent: Agent,
}

impl Client {
    /// `base` is e.g. `http://127.0.0.1:8080`. Redirects are not followed.
    pub fn new(base: impl Into<String>) -> Self {
        let agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .http_status_as_error(false)
            .max_redirects(0)
            .build()
            .into();
        Client { base: base.into(), agent }
    }

    /// Sends `body` verbatim.
    pub fn raw(&self, method: &str, path: &str, body: &str) -> Result<Reply, ureq::Error> {
        let method = Method::from_bytes(method.as_bytes()).map_err(|e| ureq::Error::BadUri(e.to_string()))?;
        let builder = Request::builder().method(method).uri(format!("{}{}", self.base, path));
        let mut resp = if body.is_empty() {
            self.agent.run(builder.body(())?)?
        } else {
            self.agent.run(builder.header("content-type", "application/json").body(body.to_string())?)?
        };
        let location = resp.headers().get("location").and_then(|v| v.to_str().ok()).map(String::from);
        let text = resp.body_mut().read_to_string()?;
        Ok(Reply {
            status: resp.status().as_u16(),
            location,
            body: serde_json::from_str(&text).unwrap_or(Value::Null),
        })
    }

    pub fn send(&self, method: &str, path: &str, body: &Value) -> Result<Reply, ureq::Error> {
        self.raw(method, path, &body.to_string())
    }

    pub fn get(&self, path: &str) -> Result<Reply, ureq::Error> {
        self.raw("GET", path, "")
    }

    pub fn delete(&self, path: &str) -> Result<Reply, ureq::Error> {
        self.raw("DELETE", path, "")
    }
}
