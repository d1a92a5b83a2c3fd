//! Southbound IaaS handler. All PaaS to IaaS traffic goes through
//! [`IaasHandler`], which encodes requests, routes them to a provider's
//! endpoint via a [`Transport`], and decodes and checks the responses.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

use crate::model::ProviderId;
use crate::sim::{IaasSnapshot, SimIaas};
use crate::wire::{self, IaasRequest, IaasResponse, Status};

/// Default per-request timeout for transports that can time out.
pub const DEFAULT_TIMEOUT_MS: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("unreachable: {0}")]
    Unreachable(String),
}

/// Moves encoded messages to and from a provider address.
pub trait Transport: Send + Sync {
    fn exchange(&self, address: &str, body: &str) -> Result<String, TransportError>;

    /// Fetches the provider's introspection document.
    fn introspect(&self, address: &str) -> Result<String, TransportError>;

    /// Whether requests to distinct providers should be issued from
    /// separate threads.
    fn concurrent(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IaasError {
    #[error("IaaS `{provider_id}` unreachable: {reason}")]
    Unreachable { provider_id: ProviderId, reason: String },
    #[error("protocol error talking to `{provider_id}`: {detail}")]
    Protocol { provider_id: ProviderId, detail: String },
    #[error("IaaS `{provider_id}` reported {code}: {message}")]
    Remote { provider_id: ProviderId, code: String, message: String, latency_ms: u64 },
}

impl IaasError {
    pub fn provider_id(&self) -> &ProviderId {
        match self {
            IaasError::Unreachable { provider_id, .. }
            | IaasError::Protocol { provider_id, .. }
            | IaasError::Remote { provider_id, .. } => provider_id,
        }
    }

    pub fn code(&self) -> &str {
        match self {
            IaasError::Unreachable { .. } => "IaaSUnreachable",
            IaasError::Protocol { .. } => "ProtocolError",
            IaasError::Remote { code, .. } => code,
        }
    }

    fn latency_ms(&self) -> u64 {
        match self {
            IaasError::Remote { latency_ms, .. } => *latency_ms,
            _ => 0,
        }
    }
}

/// Results of a fan-out, positionally matching the requests.
#[derive(Debug)]
pub struct Batch {
    pub results: Vec<Result<IaasResponse, IaasError>>,
    /// Virtual time the batch took: the slowest member, not the sum.
    pub elapsed_ms: u64,
}

impl Batch {
    pub fn all_ok(&self) -> bool {
        self.results.iter().all(Result::is_ok)
    }

    pub fn first_error(&self) -> Option<&IaasError> {
        self.results.iter().find_map(|r| r.as_ref().err())
    }
}

/// Transport to simulators living in this process. Messages still go through
/// the JSON encoding.
#[derive(Default)]
pub struct InProcessTransport {
    sims: RwLock<BTreeMap<String, Arc<Mutex<SimIaas>>>>,
}

impl InProcessTransport {
    pub const SCHEME: &'static str = "inproc://";

    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a simulator and returns its address.
    pub fn add(&self, sim: SimIaas) -> (String, Arc<Mutex<SimIaas>>) {
        let address = format!("{}{}", Self::SCHEME, sim.provider_id());
        let sim = Arc::new(Mutex::new(sim));
        self.sims.write().unwrap().insert(address.clone(), sim.clone());
        (address, sim)
    }

    pub fn sim(&self, address: &str) -> Option<Arc<Mutex<SimIaas>>> {
        self.sims.read().unwrap().get(address).cloned()
    }

    pub fn sims(&self) -> Vec<Arc<Mutex<SimIaas>>> {
        self.sims.read().unwrap().values().cloned().collect()
    }

    fn reachable(&self, address: &str) -> Result<Arc<Mutex<SimIaas>>, TransportError> {
        let sim = self.sim(address).ok_or_else(|| TransportError::Unreachable(format!("nothing at {address}")))?;
        if sim.lock().unwrap().faults.unreachable {
            return Err(TransportError::Unreachable(format!("{address} is down")));
        }
        Ok(sim)
    }
}

impl Transport for InProcessTransport {
    fn exchange(&self, address: &str, body: &str) -> Result<String, TransportError> {
        let sim = self.reachable(address)?;
        let out = sim.lock().unwrap().handle_json(body);
        Ok(out)
    }

    fn introspect(&self, address: &str) -> Result<String, TransportError> {
        let sim = self.reachable(address)?;
        let out = sim.lock().unwrap().snapshot_json();
        Ok(out)
    }
}

pub struct IaasHandler {
    endpoints: RwLock<BTreeMap<ProviderId, String>>,
    transports: Vec<(String, Arc<dyn Transport>)>,
    next_request_id: AtomicU64,
}

impl Default for IaasHandler {
    fn default() -> Self {
        Self::new()
    }
}

impl IaasHandler {
    pub fn new() -> Self {
        IaasHandler { endpoints: RwLock::new(BTreeMap::new()), transports: Vec::new(), next_request_id: AtomicU64::new(1) }
    }

    /// Routes addresses starting with `scheme` (e.g. `"http://"`) to `transport`.
    pub fn with_transport(mut self, scheme: &str, transport: Arc<dyn Transport>) -> Self {
        self.transports.push((scheme.to_string(), transport));
        self
    }

    pub fn set_endpoint(&self, provider: ProviderId, address: String) {
        self.endpoints.write().unwrap().insert(provider, address);
    }

    fn route(&self, provider: &ProviderId) -> Result<(String, Arc<dyn Transport>), IaasError> {
        let unreachable = |reason: String| IaasError::Unreachable { provider_id: provider.clone(), reason };
        let address = self
            .endpoints
            .read()
            .unwrap()
            .get(provider)
            .cloned()
            .ok_or_else(|| unreachable("no registered endpoint".into()))?;
        let transport = self
            .transports
            .iter()
            .find(|(scheme, _)| address.starts_with(scheme.as_str()))
            .map(|(_, t)| t.clone())
            .ok_or_else(|| unreachable(format!("no transport for {address}")))?;
        Ok((address, transport))
    }

    pub fn send(&self, mut req: IaasRequest) -> Result<IaasResponse, IaasError> {
        req.request_id = self.next_request_id.fetch_add(1, Ordering::Relaxed);
        let provider = req.provider_id.clone();
        let (address, transport) = self.route(&provider)?;
        let text = transport
            .exchange(&address, &wire::encode_request(&req))
            .map_err(|TransportError::Unreachable(reason)| IaasError::Unreachable { provider_id: provider.clone(), reason })?;
        let resp = wire::decode_response_for(&text, &req)
            .map_err(|e| IaasError::Protocol { provider_id: provider.clone(), detail: e.to_string() })?;
        match resp.status {
            Status::Ok => Ok(resp),
            Status::Error => Err(IaasError::Remote {
                provider_id: provider,
                code: resp.code.unwrap_or_else(|| "Unknown".into()),
                message: resp.message.unwrap_or_default(),
                latency_ms: resp.latency_ms,
            }),
        }
    }

    /// Sends every request, fanning out across providers. Requests for one
    /// provider keep their relative order. Failures are reported per item.
    pub fn broadcast(&self, reqs: Vec<IaasRequest>) -> Batch {
        if reqs.is_empty() {
            return Batch { results: Vec::new(), elapsed_ms: 0 };
        }
        let mut by_provider: BTreeMap<ProviderId, Vec<(usize, IaasRequest)>> = BTreeMap::new();
        for (i, r) in reqs.into_iter().enumerate() {
            by_provider.entry(r.provider_id.clone()).or_default().push((i, r));
        }
        let total: usize = by_provider.values().map(Vec::len).sum();
        let concurrent = by_provider.len() > 1
            && by_provider.keys().any(|p| self.route(p).is_ok_and(|(_, t)| t.concurrent()));
        let run = |group: Vec<(usize, IaasRequest)>| -> Vec<(usize, Result<IaasResponse, IaasError>)> {
            group.into_iter().map(|(i, r)| (i, self.send(r))).collect()
        };
        let mut indexed: Vec<(usize, Result<IaasResponse, IaasError>)> = if concurrent {
            std::thread::scope(|s| {
                let handles: Vec<_> = by_provider.into_values().map(|g| s.spawn(move || run(g))).collect();
                handles.into_iter().flat_map(|h| h.join().expect("IaaS fan-out thread panicked")).collect()
            })
        } else {
            by_provider.into_values().flat_map(run).collect()
        };
        debug_assert_eq!(indexed.len(), total);
        indexed.sort_by_key(|(i, _)| *i);
        let elapsed_ms = indexed
            .iter()
            .map(|(_, r)| match r {
                Ok(resp) => resp.latency_ms,
                Err(e) => e.latency_ms(),
            })
            .max()
            .unwrap_or(0);
        Batch { results: indexed.into_iter().map(|(_, r)| r).collect(), elapsed_ms }
    }

    pub fn introspect(&self, provider: &ProviderId) -> Result<IaasSnapshot, IaasError> {
        let (address, transport) = self.route(provider)?;
        let text = transport
            .introspect(&address)
            .map_err(|TransportError::Unreachable(reason)| IaasError::Unreachable { provider_id: provider.clone(), reason })?;
        serde_json::from_str(&text).map_err(|e| IaasError::Protocol { provider_id: provider.clone(), detail: e.to_string() })
    }

    pub fn providers(&self) -> Vec<ProviderId> {
        self.endpoints.read().unwrap().keys().cloned().collect()
    }
}
