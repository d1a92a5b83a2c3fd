use std::time::Duration;

use confpaas_core::handler::{Transport, TransportError, DEFAULT_TIMEOUT_MS};
use ureq::Agent;

/// Talks to IaaS servers at `http://host:port` addresses.
pub struct HttpTransport {
    agent: Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_millis(DEFAULT_TIMEOUT_MS))
    }
}

impl HttpTransport {
    pub const SCHEME: &'static str = "http://";

    pub fn new(timeout: Duration) -> Self {
        let agent = Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { agent }
    }

    fn unreachable(address: &str, e: impl std::fmt::Display) -> TransportError {
        TransportError::Unreachable(format!("{address}: {e}"))
    }
}

impl Transport for HttpTransport {
    fn exchange(&self, address: &str, body: &str) -> Result<String, TransportError> {
        let url = format!("{}/iaas", address.trim_end_matches('/'));
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| Self::unreachable(address, e))?;
        resp.body_mut().read_to_string().map_err(|e| Self::unreachable(address, e))
    }

    fn introspect(&self, address: &str) -> Result<String, TransportError> {
        let url = format!("{}/introspect", address.trim_end_matches('/'));
        let mut resp = self.agent.get(&url).call().map_err(|e| Self::unreachable(address, e))?;
        if !resp.status().is_success() {
            return Err(Self::unreachable(address, resp.status()));
        }
        resp.body_mut().read_to_string().map_err(|e| Self::unreachable(address, e))
    }

    fn concurrent(&self) -> bool {
        true
    }
}
