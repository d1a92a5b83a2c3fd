//! Conference orchestration and management.
//!
//! The [`Orchestrator`] derives substrate requirements from a conference
//! description, selects an IaaS offer per substrate, activates and connects
//! the substrates, and then runs the composed conference: participants,
//! floors, subconferences, runtime media changes and elastic scaling.
//!
//! Every conference sits behind its own mutex, so operations on one
//! conference are serialized while distinct conferences proceed in parallel.
//! Time is virtual: operations execute at the clock's current instant and
//! report their simulated latency; [`Orchestrator::advance_to`] moves the
//! clock and fires scaling ticks and media expiries on the way.

mod scaling;
mod selection;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scaling::{ScaleRequest, ScalingPolicy};
pub use selection::{
    determine_substrates, media_of, requirement_for, required_types, scores, select_offer, SelectionWeights, SubstrateRequirement,
    SCORE_TIE_EPS,
};

use crate::clock::VirtualClock;
use crate::events::{EventKind, EventLog};
use crate::handler::{IaasError, IaasHandler};
use crate::model::{
    runtime_mutable, validate_spec, Binding, ConferenceId, ConferenceModel, ConferenceRecord, ConferenceSpec,
    ConferenceState, FloorDescriptor, FloorId, FloorPolicy, FloorRecord, InstanceId, Media, ParticipantDescriptor,
    ParticipantId, ParticipantRecord, ProviderId, RawConferenceSpec, SubconferenceId, SubconferenceRecord,
    SubstrateType, Technology, TimedMedia, ValidationError,
};
use crate::registry::{OfferId, OfferUpdate, ProviderEndpoint, Registry, RegistryError, SubstrateOffer};
use crate::sim::IaasSnapshot;
use crate::wire::{BundleHint, IaasRequest, IaasResponse, RequestBody};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("no IaaS offers a {0} substrate of the required size")]
    NoCapableIaaS(SubstrateType),
    #[error("IaaS `{0}` is unreachable")]
    IaaSUnreachable(ProviderId),
    #[error("IaaS `{provider_id}` failed to activate {substrate_type}: {reason}")]
    ActivationFailed { provider_id: ProviderId, substrate_type: SubstrateType, reason: String },
    #[error(transparent)]
    IaaS(IaasError),
    #[error("conference `{0}` not found")]
    ConferenceNotFound(ConferenceId),
    #[error("conference `{0}` is not running")]
    ConferenceNotRunning(ConferenceId),
    #[error("participant `{0}` not found")]
    ParticipantNotFound(ParticipantId),
    #[error("`{0}` is not a participant of this conference")]
    UnknownParticipant(ParticipantId),
    #[error("invalid participant: {0}")]
    InvalidParticipant(String),
    #[error("floor control is unavailable: no floor control substrate can be bound")]
    FloorControlUnavailable,
    #[error("floor `{0}` not found")]
    FloorNotFound(FloorId),
    #[error("subconferences are disabled for this conference")]
    SubconferenceDisabled,
    #[error("subconference `{0}` not found")]
    SubconferenceNotFound(SubconferenceId),
    #[error("`{0}` cannot change while the conference runs")]
    NotRuntimeMutable(String),
    #[error("invalid modification: {0}")]
    InvalidModification(String),
    #[error("scaling could not make room: capacity {capacity}, {participants} participants")]
    CapacityExhausted { capacity: u32, participants: u32 },
}

impl OrchestratorError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use OrchestratorError::*;
        match self {
            Validation(e) => e.code(),
            Registry(e) => e.code(),
            NoCapableIaaS(_) => "NoCapableIaaS",
            IaaSUnreachable(_) => "IaaSUnreachable",
            ActivationFailed { .. } => "ActivationFailed",
            IaaS(IaasError::Unreachable { .. }) => "IaaSUnreachable",
            IaaS(IaasError::Protocol { .. }) => "ProtocolError",
            IaaS(IaasError::Remote { .. }) => "RemoteError",
            ConferenceNotFound(_) => "ConferenceNotFound",
            ConferenceNotRunning(_) => "ConferenceNotRunning",
            ParticipantNotFound(_) => "ParticipantNotFound",
            UnknownParticipant(_) => "UnknownParticipant",
            InvalidParticipant(_) => "InvalidParticipant",
            FloorControlUnavailable => "FloorControlUnavailable",
            FloorNotFound(_) => "FloorNotFound",
            SubconferenceDisabled => "SubconferenceDisabled",
            SubconferenceNotFound(_) => "SubconferenceNotFound",
            NotRuntimeMutable(_) => "NotRuntimeMutable",
            InvalidModification(_) => "InvalidModification",
            CapacityExhausted { .. } => "CapacityExhausted",
        }
    }

    fn southbound(e: IaasError) -> Self {
        match e {
            IaasError::Unreachable { provider_id, .. } => OrchestratorError::IaaSUnreachable(provider_id),
            other => OrchestratorError::IaaS(other),
        }
    }
}

pub type Result<T, E = OrchestratorError> = std::result::Result<T, E>;

/// A runtime change to a running conference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modification {
    AddMedia(Media),
    RemoveMedia(Media),
    /// `None` or an empty set turns floor control off.
    SetFloorControl(Option<BTreeSet<FloorPolicy>>),
    SetSubconferenceEnabled(bool),
    SetConferenceSize(u32),
    SetModel(ConferenceModel),
    SetTechnology(Technology),
    /// Any other description field, by name.
    Other(String),
}

impl Modification {
    pub fn field(&self) -> &str {
        match self {
            Modification::AddMedia(_) | Modification::RemoveMedia(_) => "media",
            Modification::SetFloorControl(_) => "floor_control",
            Modification::SetSubconferenceEnabled(_) => "subconference_enabled",
            Modification::SetConferenceSize(_) => "conference_size",
            Modification::SetModel(_) => "model",
            Modification::SetTechnology(_) => "technology",
            Modification::Other(f) => f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinOutcome {
    pub participant: ParticipantRecord,
    /// Simulated time the join took, including any scaling it triggered.
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    #[serde(default)]
    pub weights: SelectionWeights,
    #[serde(default)]
    pub policy: ScalingPolicy,
    /// Run periodic scaling ticks.
    #[serde(default = "yes")]
    pub autoscale: bool,
}

fn yes() -> bool {
    true
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig { weights: SelectionWeights::default(), policy: ScalingPolicy::default(), autoscale: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrchestratorSnapshot {
    pub now_ms: u64,
    pub conferences: Vec<ConferenceRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum TimerAction {
    ScalingTick,
    ExpireMedia { media: Media, expires_at_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Timer {
    at_ms: u64,
    seq: u64,
    conference: ConferenceId,
    action: TimerAction,
}

type Shared = Arc<Mutex<ConferenceRecord>>;

pub struct Orchestrator {
    config: OrchestratorConfig,
    registry: RwLock<Registry>,
    handler: IaasHandler,
    conferences: RwLock<BTreeMap<ConferenceId, Shared>>,
    clock: VirtualClock,
    timers: Mutex<BinaryHeap<Reverse<Timer>>>,
    timer_seq: AtomicU64,
    log: Arc<EventLog>,
    next_conference: AtomicU64,
}

impl Orchestrator {
    pub fn new(config: OrchestratorConfig, registry: Registry, handler: IaasHandler) -> Self {
        for p in registry.providers() {
            handler.set_endpoint(p.id.clone(), p.address.clone());
        }
        Orchestrator {
            config,
            registry: RwLock::new(registry),
            handler,
            conferences: RwLock::new(BTreeMap::new()),
            clock: VirtualClock::new(),
            timers: Mutex::new(BinaryHeap::new()),
            timer_seq: AtomicU64::new(0),
            log: Arc::new(EventLog::new()),
            next_conference: AtomicU64::new(1),
        }
    }

    pub fn with_clock(mut self, clock: VirtualClock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_log(mut self, log: Arc<EventLog>) -> Self {
        self.log = log;
        self
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn clock(&self) -> &VirtualClock {
        &self.clock
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn log(&self) -> &Arc<EventLog> {
        &self.log
    }

    pub fn handler(&self) -> &IaasHandler {
        &self.handler
    }

    // ---- substrate repository ----

    pub fn register_provider(&self, endpoint: ProviderEndpoint) -> Result<()> {
        self.registry.write().unwrap().register_provider(endpoint.clone())?;
        self.handler.set_endpoint(endpoint.id, endpoint.address);
        Ok(())
    }

    pub fn add_offer(&self, offer: SubstrateOffer) -> Result<SubstrateOffer> {
        let mut reg = self.registry.write().unwrap();
        let id = reg.add_offer(offer)?;
        Ok(reg.offer(id).cloned().expect("just added"))
    }

    pub fn update_offer(&self, id: OfferId, update: OfferUpdate) -> Result<SubstrateOffer> {
        Ok(self.registry.write().unwrap().update_offer(id, update)?.clone())
    }

    pub fn remove_offer(&self, id: OfferId) -> Result<SubstrateOffer> {
        Ok(self.registry.write().unwrap().remove_offer(id)?)
    }

    pub fn offer(&self, id: OfferId) -> Option<SubstrateOffer> {
        self.registry.read().unwrap().offer(id).cloned()
    }

    pub fn offers(&self) -> Vec<SubstrateOffer> {
        self.registry.read().unwrap().offers().to_vec()
    }

    pub fn providers(&self) -> Vec<ProviderEndpoint> {
        self.registry.read().unwrap().providers().cloned().collect()
    }

    fn select(&self, types: &[SubstrateType], min_size: u32, spec: &ConferenceSpec) -> Result<Vec<SubstrateOffer>> {
        let registry = self.registry.read().unwrap();
        types
            .iter()
            .map(|&t| {
                let req = SubstrateRequirement { min_size, ..requirement_for(spec, t) };
                let candidates = registry.query_offers(t, min_size);
                select_offer(&req, &candidates, &self.config.weights).map_err(OrchestratorError::NoCapableIaaS)
            })
            .collect()
    }

    // ---- conference lifecycle ----

    fn lookup(&self, id: &ConferenceId) -> Result<Shared> {
        self.conferences
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| OrchestratorError::ConferenceNotFound(id.clone()))
    }

    fn running(rec: &ConferenceRecord) -> Result<()> {
        if rec.state == ConferenceState::Running {
            Ok(())
        } else {
            Err(OrchestratorError::ConferenceNotRunning(rec.id.clone()))
        }
    }

    pub fn conference(&self, id: &ConferenceId) -> Option<ConferenceRecord> {
        self.lookup(id).ok().map(|c| c.lock().unwrap().clone())
    }

    pub fn conferences(&self) -> Vec<ConferenceRecord> {
        let all: Vec<Shared> = self.conferences.read().unwrap().values().cloned().collect();
        all.iter().map(|c| c.lock().unwrap().clone()).collect()
    }

    pub fn snapshot(&self) -> OrchestratorSnapshot {
        OrchestratorSnapshot { now_ms: self.now_ms(), conferences: self.conferences() }
    }

    pub fn create_conference(&self, raw: &RawConferenceSpec) -> Result<ConferenceRecord> {
        let spec = validate_spec(raw)?;
        self.create_conference_spec(spec)
    }

    /// Composes and starts a conference from a validated description. On any
    /// failure every substrate activated so far is released again.
    pub fn create_conference_spec(&self, spec: ConferenceSpec) -> Result<ConferenceRecord> {
        let at = self.now_ms();
        let id = ConferenceId(format!("conf-{}", self.next_conference.fetch_add(1, Ordering::Relaxed)));
        let offers = match self.select(&required_types(&spec), spec.conference_size, &spec) {
            Ok(o) => o,
            Err(e) => {
                self.log_failure(at, &id, &e);
                return Err(e);
            }
        };
        let mut rec = ConferenceRecord {
            uri: format!("/v1/conferences/{id}"),
            id: id.clone(),
            spec,
            state: ConferenceState::Composing,
            bindings: BTreeMap::new(),
            participants: BTreeMap::new(),
            floors: BTreeMap::new(),
            subconferences: BTreeMap::new(),
            timed_media: Vec::new(),
            created_at_ms: at,
            start_latency_ms: 0,
            next_seq: 0,
        };
        let size = rec.spec.conference_size;
        let elapsed = match self.bind(&mut rec, &offers, size, at) {
            Ok(e) => e,
            Err(e) => {
                self.log_failure(at, &id, &e);
                return Err(e);
            }
        };
        rec.state = ConferenceState::Running;
        rec.start_latency_ms = elapsed;
        self.log.record(at, Some(&id), EventKind::ConferenceCreated { latency_ms: elapsed, capacity: rec.capacity() });
        self.conferences.write().unwrap().insert(id.clone(), Arc::new(Mutex::new(rec.clone())));
        if self.config.autoscale {
            self.schedule(at + self.config.policy.check_interval_ms(), &id, TimerAction::ScalingTick);
        }
        Ok(rec)
    }

    fn log_failure(&self, at: u64, id: &ConferenceId, e: &OrchestratorError) {
        self.log.record(
            at,
            Some(id),
            EventKind::ConferenceFailed { code: e.code().to_string(), message: e.to_string() },
        );
    }

    fn log_iaas(&self, at: u64, id: &ConferenceId, e: &IaasError) {
        self.log.record(
            at,
            Some(id),
            EventKind::IaasError {
                provider_id: e.provider_id().clone(),
                code: e.code().to_string(),
                message: e.to_string(),
            },
        );
    }

    fn address_of(&self, provider: &ProviderId) -> String {
        self.registry.read().unwrap().provider(provider).map(|p| p.address.clone()).unwrap_or_default()
    }

    /// Activates, instantiates and connects one substrate per offer, adding
    /// them to `rec.bindings`. Existing participants are added to the new
    /// substrates. All-or-nothing: on failure the new substrates are
    /// released and `rec` is untouched. Returns elapsed virtual time.
    fn bind(&self, rec: &mut ConferenceRecord, offers: &[SubstrateOffer], size: u32, at: u64) -> Result<u64> {
        let conf_id = rec.id.clone();
        // bundle hints: every type of this conference on the same provider
        let mut per_provider: BTreeMap<&ProviderId, BTreeSet<SubstrateType>> = BTreeMap::new();
        for (t, b) in &rec.bindings {
            per_provider.entry(&b.provider_id).or_default().insert(*t);
        }
        for o in offers {
            per_provider.entry(&o.provider_id).or_default().insert(o.substrate_type);
        }
        let activations = offers
            .iter()
            .map(|o| {
                IaasRequest::new(
                    o.provider_id.clone(),
                    at,
                    RequestBody::ActivateSubstrate {
                        substrate_type: o.substrate_type,
                        size,
                        bundle: Some(BundleHint { group: conf_id.0.clone(), types: per_provider[&o.provider_id].clone() }),
                    },
                )
            })
            .collect();
        let batch = self.handler.broadcast(activations);
        let mut elapsed = batch.elapsed_ms;
        let mut activated: Vec<(usize, IaasResponse)> = Vec::new();
        let mut failure = None;
        for (i, r) in batch.results.into_iter().enumerate() {
            match r {
                Ok(resp) => activated.push((i, resp)),
                Err(e) if failure.is_none() => {
                    failure = Some(match e {
                        IaasError::Remote { provider_id, message, .. } => OrchestratorError::ActivationFailed {
                            provider_id,
                            substrate_type: offers[i].substrate_type,
                            reason: message,
                        },
                        other => OrchestratorError::southbound(other),
                    })
                }
                Err(_) => {}
            }
        }
        let instances: Vec<(usize, InstanceId, u32)> = activated
            .iter()
            .map(|(i, r)| (*i, r.instance_id.clone().expect("checked by decoder"), r.capacity.unwrap_or(size)))
            .collect();
        let rollback = |elapsed_at: u64, instances: &[(usize, InstanceId, u32)]| {
            let reqs = instances
                .iter()
                .map(|(i, inst, _)| {
                    IaasRequest::new(
                        offers[*i].provider_id.clone(),
                        elapsed_at,
                        RequestBody::DeactivateSubstrate { instance_id: inst.clone() },
                    )
                })
                .collect();
            for e in self.handler.broadcast(reqs).results.into_iter().filter_map(|r| r.err()) {
                self.log_iaas(elapsed_at, &conf_id, &e);
            }
        };
        if let Some(e) = failure {
            rollback(at + elapsed, &instances);
            return Err(e);
        }

        // individual conferences on every new substrate
        let creates = instances
            .iter()
            .map(|(i, inst, _)| {
                IaasRequest::new(
                    offers[*i].provider_id.clone(),
                    at + elapsed,
                    RequestBody::CreateSubstrateConference { instance_id: inst.clone(), conference_ref: conf_id.0.clone() },
                )
            })
            .collect();
        let batch = self.handler.broadcast(creates);
        elapsed += batch.elapsed_ms;
        if let Some(e) = batch.first_error().cloned() {
            rollback(at + elapsed, &instances);
            return Err(OrchestratorError::southbound(e));
        }
        let mut new_bindings: BTreeMap<SubstrateType, Binding> = BTreeMap::new();
        for ((i, inst, cap), r) in instances.iter().zip(batch.results) {
            let o = &offers[*i];
            new_bindings.insert(
                o.substrate_type,
                Binding {
                    offer_id: o.offer_id.0,
                    provider_id: o.provider_id.clone(),
                    instance_id: inst.clone(),
                    substrate_conference_id: r.expect("checked").substrate_conference_id.expect("checked by decoder"),
                    capacity: *cap,
                    bound_at_ms: at,
                },
            );
        }

        // star topology around the signaling substrate
        let signaling = rec
            .bindings
            .iter()
            .chain(new_bindings.iter())
            .find(|(t, _)| t.is_signaling())
            .map(|(_, b)| b.clone());
        if let Some(sig) = signaling {
            let connects = new_bindings
                .values()
                .chain(if new_bindings.values().any(|b| b.instance_id == sig.instance_id) {
                    rec.bindings.values().collect::<Vec<_>>()
                } else {
                    Vec::new()
                })
                .filter(|b| b.instance_id != sig.instance_id)
                .map(|b| {
                    IaasRequest::new(
                        sig.provider_id.clone(),
                        at + elapsed,
                        RequestBody::ConnectPeer {
                            instance_id: sig.instance_id.clone(),
                            peer_provider_id: b.provider_id.clone(),
                            peer_address: self.address_of(&b.provider_id),
                            peer_instance_id: b.instance_id.clone(),
                        },
                    )
                })
                .collect();
            let batch = self.handler.broadcast(connects);
            elapsed += batch.elapsed_ms;
            if let Some(e) = batch.first_error().cloned() {
                rollback(at + elapsed, &instances);
                return Err(OrchestratorError::southbound(e));
            }
        }

        // existing participants join the new substrates
        let participants: Vec<ParticipantRecord> = rec.participants.values().cloned().collect();
        let mut joins = Vec::new();
        let mut slots = Vec::new();
        for (t, b) in &new_bindings {
            for p in &participants {
                joins.push(IaasRequest::new(
                    b.provider_id.clone(),
                    at + elapsed,
                    RequestBody::AddParticipant {
                        instance_id: b.instance_id.clone(),
                        substrate_conference_id: b.substrate_conference_id.clone(),
                        participant: p.descriptor.clone(),
                    },
                ));
                slots.push((*t, p.id.clone()));
            }
        }
        let batch = self.handler.broadcast(joins);
        elapsed += batch.elapsed_ms;
        if let Some(e) = batch.first_error().cloned() {
            rollback(at + elapsed, &instances);
            return Err(OrchestratorError::southbound(e));
        }
        for ((t, pid), r) in slots.into_iter().zip(batch.results) {
            let member = r.expect("checked").member_id.expect("checked by decoder");
            rec.participants.get_mut(&pid).expect("participant exists").memberships.insert(t, member);
        }

        for (t, b) in new_bindings {
            self.log.record(
                at,
                Some(&conf_id),
                EventKind::SubstrateBound {
                    substrate_type: t,
                    provider_id: b.provider_id.clone(),
                    instance_id: b.instance_id.clone(),
                    capacity: b.capacity,
                },
            );
            rec.bindings.insert(t, b);
        }
        Ok(elapsed)
    }

    /// Destroys the individual conference on each substrate and deactivates
    /// it. IaaS failures are logged; the binding is dropped regardless.
    fn release(&self, rec: &mut ConferenceRecord, types: &[SubstrateType], at: u64) -> u64 {
        let bindings: Vec<(SubstrateType, Binding)> =
            types.iter().filter_map(|t| rec.bindings.remove(t).map(|b| (*t, b))).collect();
        let destroys = bindings
            .iter()
            .map(|(_, b)| {
                IaasRequest::new(
                    b.provider_id.clone(),
                    at,
                    RequestBody::DestroySubstrateConference {
                        instance_id: b.instance_id.clone(),
                        substrate_conference_id: b.substrate_conference_id.clone(),
                    },
                )
            })
            .collect();
        let first = self.handler.broadcast(destroys);
        let deactivations = bindings
            .iter()
            .map(|(_, b)| {
                IaasRequest::new(
                    b.provider_id.clone(),
                    at + first.elapsed_ms,
                    RequestBody::DeactivateSubstrate { instance_id: b.instance_id.clone() },
                )
            })
            .collect();
        let second = self.handler.broadcast(deactivations);
        for e in first.results.iter().chain(&second.results).filter_map(|r| r.as_ref().err()) {
            self.log_iaas(at, &rec.id, e);
        }
        for (t, b) in &bindings {
            for p in rec.participants.values_mut() {
                p.memberships.remove(t);
            }
            self.log.record(
                at,
                Some(&rec.id),
                EventKind::SubstrateReleased {
                    substrate_type: *t,
                    provider_id: b.provider_id.clone(),
                    instance_id: b.instance_id.clone(),
                },
            );
        }
        first.elapsed_ms + second.elapsed_ms
    }

    /// Asks every bound IaaS to provision `target` participants. Bindings
    /// whose IaaS fails keep their capacity.
    fn scale_to(&self, rec: &mut ConferenceRecord, target: u32, at: u64) -> u64 {
        let from = rec.capacity();
        self.log.record(at, Some(&rec.id), EventKind::ScaleRequested { from, target });
        let types: Vec<SubstrateType> = rec.bindings.keys().copied().collect();
        let reqs = types
            .iter()
            .map(|t| {
                let b = &rec.bindings[t];
                IaasRequest::new(
                    b.provider_id.clone(),
                    at,
                    RequestBody::ScaleConference { instance_id: b.instance_id.clone(), size: target },
                )
            })
            .collect();
        let batch = self.handler.broadcast(reqs);
        for (t, r) in types.iter().zip(batch.results) {
            match r {
                Ok(resp) => {
                    let capacity = resp.capacity.expect("checked by decoder");
                    rec.bindings.get_mut(t).expect("bound").capacity = capacity;
                    self.log.record(at, Some(&rec.id), EventKind::BindingScaled { substrate_type: *t, capacity });
                }
                Err(e) => {
                    self.log.record(
                        at,
                        Some(&rec.id),
                        EventKind::ScaleFailed { provider_id: e.provider_id().clone(), message: e.to_string() },
                    );
                }
            }
        }
        batch.elapsed_ms
    }

    pub fn add_participant(&self, id: &ConferenceId, desc: ParticipantDescriptor) -> Result<JoinOutcome> {
        if !desc.has_valid_uri() {
            return Err(OrchestratorError::InvalidParticipant(format!("`{}` is not a URI", desc.uri)));
        }
        let conf = self.lookup(id)?;
        let mut rec = conf.lock().unwrap();
        Self::running(&rec)?;
        let at = self.now_ms();
        let n = rec.participant_count();
        let mut latency = 0;
        if n + 1 > rec.capacity() {
            rec.state = ConferenceState::Scaling;
            let target = self.config.policy.grow_target(rec.capacity(), n + 1);
            latency += self.scale_to(&mut rec, target, at);
            rec.state = ConferenceState::Running;
            if rec.capacity() < n + 1 {
                return Err(OrchestratorError::CapacityExhausted { capacity: rec.capacity(), participants: n });
            }
        }
        let pid = ParticipantId(rec.next_id("p"));
        let types: Vec<SubstrateType> = rec.bindings.keys().copied().collect();
        let reqs = types
            .iter()
            .map(|t| {
                let b = &rec.bindings[t];
                IaasRequest::new(
                    b.provider_id.clone(),
                    at + latency,
                    RequestBody::AddParticipant {
                        instance_id: b.instance_id.clone(),
                        substrate_conference_id: b.substrate_conference_id.clone(),
                        participant: desc.clone(),
                    },
                )
            })
            .collect();
        let batch = self.handler.broadcast(reqs);
        latency += batch.elapsed_ms;
        let mut memberships = BTreeMap::new();
        let mut failure = None;
        for (t, r) in types.iter().zip(batch.results) {
            match r {
                Ok(resp) => {
                    memberships.insert(*t, resp.member_id.expect("checked by decoder"));
                }
                Err(e) => failure = failure.or(Some(e)),
            }
        }
        if let Some(e) = failure {
            self.drop_memberships(&rec, &memberships, at + latency);
            return Err(OrchestratorError::southbound(e));
        }
        let participant = ParticipantRecord {
            uri: format!("{}/participants/{pid}", rec.uri),
            id: pid.clone(),
            descriptor: desc,
            memberships,
        };
        rec.participants.insert(pid.clone(), participant.clone());
        let count = rec.participant_count();
        self.log.record(
            at,
            Some(id),
            EventKind::ParticipantJoined { participant_id: pid, participants: count, latency_ms: latency },
        );
        Ok(JoinOutcome { participant, latency_ms: latency })
    }

    fn drop_memberships(&self, rec: &ConferenceRecord, memberships: &BTreeMap<SubstrateType, String>, at: u64) -> u64 {
        let reqs = memberships
            .iter()
            .filter_map(|(t, member)| {
                let b = rec.bindings.get(t)?;
                Some(IaasRequest::new(
                    b.provider_id.clone(),
                    at,
                    RequestBody::RemoveParticipant {
                        instance_id: b.instance_id.clone(),
                        substrate_conference_id: b.substrate_conference_id.clone(),
                        member_id: member.clone(),
                    },
                ))
            })
            .collect();
        let batch = self.handler.broadcast(reqs);
        for e in batch.results.iter().filter_map(|r| r.as_ref().err()) {
            self.log_iaas(at, &rec.id, e);
        }
        batch.elapsed_ms
    }

    /// Removes a participant from every substrate, floor and subconference.
    /// A departing chair leaves its floor without a chair.
    pub fn remove_participant(&self, id: &ConferenceId, pid: &ParticipantId) -> Result<u64> {
        let conf = self.lookup(id)?;
        let mut rec = conf.lock().unwrap();
        let at = self.now_ms();
        let participant =
            rec.participants.get(pid).cloned().ok_or_else(|| OrchestratorError::ParticipantNotFound(pid.clone()))?;
        let latency = self.drop_memberships(&rec, &participant.memberships, at);
        rec.participants.remove(pid);
        let mut vacated = Vec::new();
        for floor in rec.floors.values_mut() {
            floor.floor_participants.remove(pid);
            if floor.chair.as_ref() == Some(pid) {
                floor.chair = None;
                vacated.push(floor.id.clone());
            }
        }
        for sub in rec.subconferences.values_mut() {
            sub.members.remove(pid);
        }
        for floor_id in vacated {
            self.log.record(at, Some(id), EventKind::FloorChairVacant { floor_id });
        }
        let count = rec.participant_count();
        self.log.record(at, Some(id), EventKind::ParticipantLeft { participant_id: pid.clone(), participants: count });
        Ok(latency)
    }

    fn check_members<'a>(rec: &ConferenceRecord, ids: impl IntoIterator<Item = &'a ParticipantId>) -> Result<()> {
        match ids.into_iter().find(|p| !rec.participants.contains_key(*p)) {
            Some(p) => Err(OrchestratorError::UnknownParticipant(p.clone())),
            None => Ok(()),
        }
    }

    fn bind_types(&self, rec: &mut ConferenceRecord, types: &[SubstrateType], at: u64) -> Result<u64> {
        let size = rec.capacity().max(1);
        let spec = rec.spec.clone();
        let offers = self.select(types, size, &spec)?;
        self.bind(rec, &offers, size, at)
    }

    pub fn add_floor(&self, id: &ConferenceId, desc: FloorDescriptor) -> Result<FloorRecord> {
        let conf = self.lookup(id)?;
        let mut rec = conf.lock().unwrap();
        Self::running(&rec)?;
        Self::check_members(&rec, std::iter::once(&desc.chair).chain(&desc.floor_participants))?;
        let at = self.now_ms();
        if !rec.bindings.contains_key(&SubstrateType::FloorControl) {
            match self.bind_types(&mut rec, &[SubstrateType::FloorControl], at) {
                Ok(_) => {}
                Err(OrchestratorError::NoCapableIaaS(_)) => return Err(OrchestratorError::FloorControlUnavailable),
                Err(e) => return Err(e),
            }
            rec.spec.floor_control.get_or_insert_with(|| BTreeSet::from([FloorPolicy::ChairModerated]));
        }
        let fid = FloorId(rec.next_id("f"));
        let b = rec.bindings[&SubstrateType::FloorControl].clone();
        let resp = self
            .handler
            .send(IaasRequest::new(
                b.provider_id.clone(),
                at,
                RequestBody::CreateSubstrateConference {
                    instance_id: b.instance_id.clone(),
                    conference_ref: format!("{id}/{fid}"),
                },
            ))
            .map_err(OrchestratorError::southbound)?;
        let floor = FloorRecord {
            uri: format!("{}/floors/{fid}", rec.uri),
            id: fid.clone(),
            chair: Some(desc.chair),
            floor_participants: desc.floor_participants,
            substrate_conference_id: resp.substrate_conference_id,
        };
        rec.floors.insert(fid.clone(), floor.clone());
        self.log.record(at, Some(id), EventKind::FloorCreated { floor_id: fid });
        Ok(floor)
    }

    pub fn create_subconference(
        &self,
        id: &ConferenceId,
        members: BTreeSet<ParticipantId>,
    ) -> Result<SubconferenceRecord> {
        let conf = self.lookup(id)?;
        let mut rec = conf.lock().unwrap();
        Self::running(&rec)?;
        if !rec.spec.subconference_enabled {
            return Err(OrchestratorError::SubconferenceDisabled);
        }
        Self::check_members(&rec, &members)?;
        let sid = SubconferenceId(rec.next_id("s"));
        let sub = SubconferenceRecord { uri: format!("{}/subconferences/{sid}", rec.uri), id: sid.clone(), members };
        rec.subconferences.insert(sid.clone(), sub.clone());
        self.log.record(self.now_ms(), Some(id), EventKind::SubconferenceCreated { subconference_id: sid });
        Ok(sub)
    }

    pub fn remove_subconference(&self, id: &ConferenceId, sid: &SubconferenceId) -> Result<()> {
        let conf = self.lookup(id)?;
        let mut rec = conf.lock().unwrap();
        rec.subconferences.remove(sid).ok_or_else(|| OrchestratorError::SubconferenceNotFound(sid.clone()))?;
        self.log.record(self.now_ms(), Some(id), EventKind::SubconferenceRemoved { subconference_id: sid.clone() });
        Ok(())
    }

    /// Applies a runtime change. `duration_s` is only meaningful for
    /// [`Modification::AddMedia`]: the medium is removed again when it runs out.
    pub fn modify_conference(
        &self,
        id: &ConferenceId,
        change: Modification,
        duration_s: Option<u64>,
    ) -> Result<ConferenceRecord> {
        let field = change.field().to_string();
        if !runtime_mutable(&field)? {
            return Err(OrchestratorError::NotRuntimeMutable(field));
        }
        if duration_s.is_some() && !matches!(change, Modification::AddMedia(_)) {
            return Err(OrchestratorError::InvalidModification("a duration only applies to adding media".into()));
        }
        let conf = self.lookup(id)?;
        let mut rec = conf.lock().unwrap();
        Self::running(&rec)?;
        let at = self.now_ms();
        rec.state = ConferenceState::Modifying;
        let result = self.apply_modification(&mut rec, change, duration_s, at);
        rec.state = ConferenceState::Running;
        result.map(|_| rec.clone())
    }

    fn apply_modification(
        &self,
        rec: &mut ConferenceRecord,
        change: Modification,
        duration_s: Option<u64>,
        at: u64,
    ) -> Result<()> {
        match change {
            Modification::AddMedia(m) => {
                let expires_at_ms = duration_s.map(|d| at + d * 1000);
                if rec.spec.media.contains(&m) {
                    let timed = rec.timed_media.iter_mut().find(|tm| tm.media == m);
                    match (timed, expires_at_ms) {
                        (Some(tm), Some(exp)) => tm.expires_at_ms = exp,
                        (Some(_), None) => rec.timed_media.retain(|tm| tm.media != m),
                        (None, _) => return Ok(()),
                    }
                } else {
                    self.bind_types(rec, &[SubstrateType::for_media(m)], at)?;
                    rec.spec.media.insert(m);
                    if let Some(exp) = expires_at_ms {
                        rec.timed_media.push(TimedMedia { media: m, expires_at_ms: exp });
                    }
                }
                if let Some(exp) = expires_at_ms {
                    self.schedule(exp, &rec.id, TimerAction::ExpireMedia { media: m, expires_at_ms: exp });
                }
                self.log.record(at, Some(&rec.id), EventKind::MediaAdded { media: m, expires_at_ms });
                Ok(())
            }
            Modification::RemoveMedia(m) => self.remove_media(rec, m, at),
            Modification::SetFloorControl(policies) => {
                match policies.filter(|p| !p.is_empty()) {
                    Some(p) => {
                        if !rec.bindings.contains_key(&SubstrateType::FloorControl) {
                            self.bind_types(rec, &[SubstrateType::FloorControl], at)?;
                        }
                        rec.spec.floor_control = Some(p);
                    }
                    None => {
                        self.release(rec, &[SubstrateType::FloorControl], at);
                        rec.floors.clear();
                        rec.spec.floor_control = None;
                    }
                }
                Ok(())
            }
            Modification::SetSubconferenceEnabled(enabled) => {
                rec.spec.subconference_enabled = enabled;
                if !enabled {
                    rec.subconferences.clear();
                }
                Ok(())
            }
            Modification::SetConferenceSize(size) => {
                if size == 0 || size < rec.participant_count() {
                    return Err(OrchestratorError::InvalidModification(format!(
                        "size {size} cannot hold the {} current participants",
                        rec.participant_count()
                    )));
                }
                rec.spec.conference_size = size;
                self.scale_to(rec, size, at);
                Ok(())
            }
            Modification::SetModel(_) | Modification::SetTechnology(_) | Modification::Other(_) => {
                unreachable!("immutable fields are rejected before locking")
            }
        }
    }

    fn remove_media(&self, rec: &mut ConferenceRecord, m: Media, at: u64) -> Result<()> {
        if !rec.spec.media.contains(&m) {
            return Err(OrchestratorError::InvalidModification(format!("{m} is not part of the conference")));
        }
        if rec.spec.media.len() == 1 {
            return Err(OrchestratorError::InvalidModification("a conference keeps at least one medium".into()));
        }
        self.release(rec, &[SubstrateType::for_media(m)], at);
        rec.spec.media.remove(&m);
        rec.timed_media.retain(|tm| tm.media != m);
        self.log.record(at, Some(&rec.id), EventKind::MediaRemoved { media: m });
        Ok(())
    }

    /// One scaling decision for a running conference at the current instant.
    pub fn scaling_tick(&self, id: &ConferenceId) -> Result<Option<ScaleRequest>> {
        let conf = self.lookup(id)?;
        let mut rec = conf.lock().unwrap();
        Self::running(&rec)?;
        let (from, n) = (rec.capacity(), rec.participant_count());
        let Some(target) = self.config.policy.decide(from, n) else {
            return Ok(None);
        };
        rec.state = ConferenceState::Scaling;
        self.scale_to(&mut rec, target, self.now_ms());
        rec.state = ConferenceState::Running;
        Ok(Some(ScaleRequest { conference_id: id.clone(), from, target }))
    }

    /// Destroys every substrate conference and releases the substrates.
    /// Terminating twice is fine.
    pub fn terminate_conference(&self, id: &ConferenceId) -> Result<()> {
        let conf = self.lookup(id)?;
        let mut rec = conf.lock().unwrap();
        if rec.state == ConferenceState::Terminated {
            return Ok(());
        }
        let at = self.now_ms();
        let types: Vec<SubstrateType> = rec.bindings.keys().copied().collect();
        self.release(&mut rec, &types, at);
        rec.participants.clear();
        rec.floors.clear();
        rec.subconferences.clear();
        rec.timed_media.clear();
        rec.state = ConferenceState::Terminated;
        self.log.record(at, Some(id), EventKind::ConferenceTerminated);
        Ok(())
    }

    // ---- virtual time ----

    fn schedule(&self, at_ms: u64, conference: &ConferenceId, action: TimerAction) {
        let seq = self.timer_seq.fetch_add(1, Ordering::Relaxed);
        self.timers.lock().unwrap().push(Reverse(Timer { at_ms, seq, conference: conference.clone(), action }));
    }

    /// Moves the clock to `t_ms`, firing due timers in time order at their
    /// own instants.
    pub fn advance_to(&self, t_ms: u64) {
        loop {
            let timer = {
                let mut timers = self.timers.lock().unwrap();
                match timers.peek() {
                    Some(Reverse(next)) if next.at_ms <= t_ms => timers.pop().map(|Reverse(t)| t),
                    _ => None,
                }
            };
            let Some(timer) = timer else { break };
            self.clock.advance_to(timer.at_ms);
            self.fire(timer);
        }
        self.clock.advance_to(t_ms);
    }

    pub fn advance_by(&self, d_ms: u64) {
        self.advance_to(self.now_ms() + d_ms);
    }

    fn fire(&self, timer: Timer) {
        let Ok(conf) = self.lookup(&timer.conference) else { return };
        match timer.action {
            TimerAction::ScalingTick => {
                if conf.lock().unwrap().state != ConferenceState::Running {
                    return;
                }
                let _ = self.scaling_tick(&timer.conference);
                self.schedule(timer.at_ms + self.config.policy.check_interval_ms(), &timer.conference, TimerAction::ScalingTick);
            }
            TimerAction::ExpireMedia { media, expires_at_ms } => {
                let mut rec = conf.lock().unwrap();
                let due = rec.state == ConferenceState::Running
                    && rec.timed_media.iter().any(|tm| tm.media == media && tm.expires_at_ms == expires_at_ms);
                if due {
                    if let Err(e) = self.remove_media(&mut rec, media, timer.at_ms) {
                        self.log_failure(timer.at_ms, &timer.conference, &e);
                    }
                }
            }
        }
    }

    // ---- audit support ----

    /// Introspection documents of every reachable provider.
    pub fn iaas_snapshots(&self) -> Vec<IaasSnapshot> {
        self.handler.providers().iter().filter_map(|p| self.handler.introspect(p).ok()).collect()
    }

    /// Logs a quiescent marker carrying every provider's state, and returns
    /// that state.
    pub fn mark_quiescent(&self) -> Vec<IaasSnapshot> {
        let iaas = self.iaas_snapshots();
        self.log.record(self.now_ms(), None, EventKind::Quiescent { iaas: iaas.clone() });
        iaas
    }
}
