use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::{vms_for_load, IaasConfig, PlacementMode, EPS};
use crate::model::{InstanceId, ParticipantDescriptor, ProviderId, SubstrateType};
use crate::wire::{self, BundleHint, IaasRequest, IaasResponse, RequestBody};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("VM ceiling reached: {0}")]
    CapacityExceeded(String),
    #[error("unknown substrate instance `{0}`")]
    UnknownInstance(InstanceId),
    #[error("unknown substrate conference `{0}`")]
    UnknownConference(String),
    #[error("unknown member `{0}`")]
    UnknownMember(String),
    #[error("instance `{0}` is at capacity")]
    OverCapacity(InstanceId),
    #[error("target {target} is below the {load} participants currently hosted")]
    BelowLoad { target: u32, load: u32 },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("injected failure: {0}")]
    Injected(String),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::CapacityExceeded(_) => "CapacityExceeded",
            SimError::UnknownInstance(_) => "UnknownInstance",
            SimError::UnknownConference(_) => "UnknownConference",
            SimError::UnknownMember(_) => "UnknownMember",
            SimError::OverCapacity(_) => "OverCapacity",
            SimError::BelowLoad { .. } => "BelowLoad",
            SimError::Invalid(_) => "InvalidRequest",
            SimError::Injected(_) => "InjectedFailure",
        }
    }
}

/// Failure injection switches for tests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimFaults {
    /// Transport refuses to deliver anything to this provider.
    pub unreachable: bool,
    pub fail_activation: BTreeSet<SubstrateType>,
    pub fail_scale: bool,
    /// Strip the promised ids from ok responses.
    pub omit_ids: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostedSnapshot {
    pub instance_id: InstanceId,
    pub substrate_type: SubstrateType,
    pub participants: f64,
    pub demand_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmSnapshot {
    pub vm_id: String,
    pub ram_total_mb: f64,
    pub os_overhead_mb: f64,
    pub vcpus: u32,
    pub used_mb: f64,
    pub ready_at_ms: u64,
    pub pooled: bool,
    pub hosted: Vec<HostedSnapshot>,
}

impl VmSnapshot {
    pub fn fits(&self) -> bool {
        self.os_overhead_mb + self.used_mb <= self.ram_total_mb + 1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubConferenceSnapshot {
    pub conference_ref: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSnapshot {
    pub instance_id: InstanceId,
    pub substrate_type: SubstrateType,
    pub capacity: u32,
    pub participants: u32,
    pub vm_ids: Vec<String>,
    pub conferences: BTreeMap<String, SubConferenceSnapshot>,
    pub activated_at_ms: u64,
}

/// Full VM and substrate state of one provider, for audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaasSnapshot {
    pub provider_id: ProviderId,
    pub placement: PlacementMode,
    pub vms: Vec<VmSnapshot>,
    pub instances: Vec<InstanceSnapshot>,
}

impl IaasSnapshot {
    /// Non-pool VMs hosting any of `instances`, and their RAM.
    pub fn vms_hosting(&self, instances: &BTreeSet<InstanceId>) -> (u32, f64) {
        self.vms
            .iter()
            .filter(|vm| vm.hosted.iter().any(|h| instances.contains(&h.instance_id)))
            .fold((0, 0.0), |(n, ram), vm| (n + 1, ram + vm.ram_total_mb))
    }

    pub fn instance(&self, id: &InstanceId) -> Option<&InstanceSnapshot> {
        self.instances.iter().find(|i| &i.instance_id == id)
    }
}

#[derive(Debug, Clone)]
struct Hosted {
    instance_id: InstanceId,
    substrate_type: SubstrateType,
    participants: f64,
    demand_mb: f64,
}

#[derive(Debug, Clone)]
struct Vm {
    id: String,
    ready_at_ms: u64,
    pooled: bool,
    hosted: Vec<Hosted>,
}

#[derive(Debug, Clone)]
enum Placement {
    Dedicated(Vec<u64>),
    Grouped(String),
}

#[derive(Debug, Clone)]
struct SubConference {
    conference_ref: String,
    members: BTreeMap<String, ParticipantDescriptor>,
}

#[derive(Debug, Clone)]
struct Instance {
    substrate_type: SubstrateType,
    capacity: u32,
    placement: Placement,
    conferences: BTreeMap<String, SubConference>,
    peers: BTreeSet<(ProviderId, InstanceId)>,
    activated_at_ms: u64,
}

impl Instance {
    fn load(&self) -> u32 {
        self.conferences.values().map(|c| c.members.len() as u32).sum()
    }
}

#[derive(Debug, Clone, Default)]
struct Group {
    declared: BTreeSet<SubstrateType>,
    members: BTreeSet<InstanceId>,
    vms: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
struct State {
    vms: BTreeMap<u64, Vm>,
    instances: BTreeMap<InstanceId, Instance>,
    groups: BTreeMap<String, Group>,
    seq: u64,
}

/// Outcome of re-laying out VMs for a change.
struct Layout {
    booted: bool,
    ready_at_ms: u64,
}

/// A simulated conferencing IaaS: substrate lifecycle, VM packing with
/// scale-up and scale-out, and a latency model on virtual time.
#[derive(Debug, Clone)]
pub struct SimIaas {
    provider_id: ProviderId,
    config: IaasConfig,
    rng: ChaCha8Rng,
    state: State,
    pub faults: SimFaults,
}

impl SimIaas {
    pub fn new(provider_id: ProviderId, config: IaasConfig) -> Self {
        let mut seed = config.seed;
        for b in provider_id.as_str().bytes() {
            seed = seed.wrapping_mul(0x100_0000_01b3).wrapping_add(b as u64);
        }
        let mut sim = SimIaas {
            provider_id,
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
            state: State::default(),
            faults: SimFaults::default(),
        };
        if sim.config.placement == PlacementMode::Prealloc {
            for _ in 0..sim.config.prealloc_vms {
                let seq = sim.next_seq();
                let id = format!("{}-vm{seq}", sim.provider_id);
                sim.state.vms.insert(seq, Vm { id, ready_at_ms: 0, pooled: true, hosted: Vec::new() });
            }
        }
        sim
    }

    pub fn provider_id(&self) -> &ProviderId {
        &self.provider_id
    }

    pub fn config(&self) -> &IaasConfig {
        &self.config
    }

    fn next_seq(&mut self) -> u64 {
        self.state.seq += 1;
        self.state.seq
    }

    fn jitter(&mut self) -> u64 {
        match self.config.latency.jitter_ms {
            0 => 0,
            j => self.rng.random_range(0..=j),
        }
    }

    /// Serves one wire-protocol message.
    pub fn handle_json(&mut self, text: &str) -> String {
        let resp = match wire::decode_request(text) {
            Ok(req) => self.handle(&req),
            Err(e) => IaasResponse::error(0, "BadRequest", e.to_string(), 0),
        };
        wire::encode_response(&resp)
    }

    pub fn handle(&mut self, req: &IaasRequest) -> IaasResponse {
        if req.provider_id != self.provider_id {
            return IaasResponse::error(
                req.request_id,
                "WrongProvider",
                format!("this is `{}`, not `{}`", self.provider_id, req.provider_id),
                0,
            );
        }
        let mut resp = match self.apply(req) {
            Ok(mut resp) => {
                resp.request_id = req.request_id;
                resp
            }
            Err(e) => IaasResponse::error(req.request_id, e.code(), e.to_string(), self.config.latency.local_op_ms),
        };
        resp.latency_ms += self.jitter();
        if self.faults.omit_ids {
            resp.instance_id = None;
            resp.substrate_conference_id = None;
            resp.member_id = None;
            resp.capacity = None;
        }
        resp
    }

    fn apply(&mut self, req: &IaasRequest) -> Result<IaasResponse, SimError> {
        let lat = self.config.latency.clone();
        let at = req.at_ms;
        match &req.body {
            RequestBody::ActivateSubstrate { substrate_type, size, bundle } => {
                if self.faults.fail_activation.contains(substrate_type) {
                    return Err(SimError::Injected(format!("activation of {substrate_type}")));
                }
                let (id, latency) = self.activate(*substrate_type, *size, bundle.as_ref(), at)?;
                let mut r = IaasResponse::ok(0, latency);
                r.capacity = Some(*size);
                r.instance_id = Some(id);
                Ok(r)
            }
            RequestBody::DeactivateSubstrate { instance_id } => {
                self.deactivate(instance_id)?;
                Ok(IaasResponse::ok(0, lat.local_op_ms))
            }
            RequestBody::CreateSubstrateConference { instance_id, conference_ref } => {
                let seq = self.next_seq();
                let sc_id = format!("{}-sc{seq}", self.provider_id);
                let inst = self.instance_mut(instance_id)?;
                inst.conferences.insert(
                    sc_id.clone(),
                    SubConference { conference_ref: conference_ref.clone(), members: BTreeMap::new() },
                );
                let mut r = IaasResponse::ok(0, lat.local_op_ms);
                r.substrate_conference_id = Some(sc_id);
                Ok(r)
            }
            RequestBody::DestroySubstrateConference { instance_id, substrate_conference_id } => {
                let inst = self.instance_mut(instance_id)?;
                inst.conferences
                    .remove(substrate_conference_id)
                    .ok_or_else(|| SimError::UnknownConference(substrate_conference_id.clone()))?;
                Ok(IaasResponse::ok(0, lat.local_op_ms))
            }
            RequestBody::AddParticipant { instance_id, substrate_conference_id, participant } => {
                let seq = self.next_seq();
                let member_id = format!("{}-m{seq}", self.provider_id);
                let inst = self.instance_mut(instance_id)?;
                if inst.load() >= inst.capacity {
                    return Err(SimError::OverCapacity(instance_id.clone()));
                }
                let conf = inst
                    .conferences
                    .get_mut(substrate_conference_id)
                    .ok_or_else(|| SimError::UnknownConference(substrate_conference_id.clone()))?;
                conf.members.insert(member_id.clone(), participant.clone());
                // pre-allocated deployments need no PaaS notification round
                let notify = match self.config.placement {
                    PlacementMode::Prealloc => 0,
                    _ => lat.notify_paas_ms,
                };
                let mut r = IaasResponse::ok(0, lat.local_op_ms + notify);
                r.member_id = Some(member_id);
                Ok(r)
            }
            RequestBody::RemoveParticipant { instance_id, substrate_conference_id, member_id } => {
                let inst = self.instance_mut(instance_id)?;
                let conf = inst
                    .conferences
                    .get_mut(substrate_conference_id)
                    .ok_or_else(|| SimError::UnknownConference(substrate_conference_id.clone()))?;
                conf.members.remove(member_id).ok_or_else(|| SimError::UnknownMember(member_id.clone()))?;
                Ok(IaasResponse::ok(0, lat.local_op_ms))
            }
            RequestBody::ConnectPeer { instance_id, peer_provider_id, peer_instance_id, .. } => {
                let shares_vm = *peer_provider_id == self.provider_id && {
                    let peer = self.instance_vms(peer_instance_id)?;
                    let own = self.instance_vms(instance_id)?;
                    own.iter().any(|v| peer.contains(v))
                };
                let provider = peer_provider_id.clone();
                let peer_id = peer_instance_id.clone();
                self.instance_mut(instance_id)?.peers.insert((provider, peer_id));
                let cost = if shares_vm { lat.intra_vm_connect_ms } else { lat.inter_iaas_connect_ms };
                Ok(IaasResponse::ok(0, cost))
            }
            RequestBody::ScaleConference { instance_id, size } => {
                if self.faults.fail_scale {
                    return Err(SimError::Injected("scale".into()));
                }
                let booted = self.scale(instance_id, *size, at)?;
                let latency = match (self.config.placement, booted) {
                    (PlacementMode::Prealloc, _) | (_, false) => lat.local_op_ms,
                    (_, true) => lat.vm_boot_ms + lat.local_op_ms,
                };
                let mut r = IaasResponse::ok(0, latency);
                r.capacity = Some(*size);
                Ok(r)
            }
        }
    }

    fn instance_mut(&mut self, id: &InstanceId) -> Result<&mut Instance, SimError> {
        self.state.instances.get_mut(id).ok_or_else(|| SimError::UnknownInstance(id.clone()))
    }

    fn instance_vms(&self, id: &InstanceId) -> Result<Vec<u64>, SimError> {
        let inst = self.state.instances.get(id).ok_or_else(|| SimError::UnknownInstance(id.clone()))?;
        Ok(match &inst.placement {
            Placement::Dedicated(v) => v.clone(),
            Placement::Grouped(key) => self.state.groups.get(key).map(|g| g.vms.clone()).unwrap_or_default(),
        })
    }

    fn activate(
        &mut self,
        substrate_type: SubstrateType,
        size: u32,
        bundle: Option<&BundleHint>,
        at: u64,
    ) -> Result<(InstanceId, u64), SimError> {
        if size == 0 {
            return Err(SimError::Invalid("size must be >= 1".into()));
        }
        let seq = self.next_seq();
        let id = InstanceId(format!("{}-i{seq}", self.provider_id));
        let placement = match self.config.placement {
            PlacementMode::PerSubstrate => Placement::Dedicated(Vec::new()),
            PlacementMode::Bundle | PlacementMode::Prealloc => {
                Placement::Grouped(bundle.map_or_else(|| id.0.clone(), |b| b.group.clone()))
            }
        };
        let backup = self.state.clone();
        self.state.instances.insert(
            id.clone(),
            Instance {
                substrate_type,
                capacity: size,
                placement: placement.clone(),
                conferences: BTreeMap::new(),
                peers: BTreeSet::new(),
                activated_at_ms: at,
            },
        );
        let layout = match &placement {
            Placement::Dedicated(_) => self.layout_dedicated(&id, at),
            Placement::Grouped(key) => {
                let group = self.state.groups.entry(key.clone()).or_default();
                group.members.insert(id.clone());
                group.declared.insert(substrate_type);
                if let Some(b) = bundle {
                    group.declared.extend(b.types.iter().copied());
                }
                self.layout_group(key, at)
            }
        };
        let layout = match layout {
            Ok(l) => l,
            Err(e) => {
                self.state = backup;
                return Err(e);
            }
        };
        let lat = &self.config.latency;
        let latency = match self.config.placement {
            PlacementMode::Prealloc => 0,
            _ if layout.booted => lat.vm_boot_ms + lat.substrate_init_ms,
            _ => layout.ready_at_ms.saturating_sub(at) + lat.substrate_init_ms,
        };
        Ok((id, latency))
    }

    fn deactivate(&mut self, id: &InstanceId) -> Result<(), SimError> {
        let inst = self.state.instances.remove(id).ok_or_else(|| SimError::UnknownInstance(id.clone()))?;
        match inst.placement {
            Placement::Dedicated(vms) => {
                for v in vms {
                    self.state.vms.remove(&v);
                }
            }
            Placement::Grouped(key) => {
                let group = self.state.groups.get_mut(&key).expect("grouped instance has a group");
                group.members.remove(id);
                let still_used = group
                    .members
                    .iter()
                    .any(|m| self.state.instances.get(m).is_some_and(|i| i.substrate_type == inst.substrate_type));
                if !still_used {
                    group.declared.remove(&inst.substrate_type);
                }
                // shrinking never boots, so this cannot fail
                self.layout_group(&key, 0)?;
                if self.state.groups[&key].members.is_empty() {
                    self.state.groups.remove(&key);
                }
            }
        }
        Ok(())
    }

    /// Returns whether a VM was booted.
    fn scale(&mut self, id: &InstanceId, size: u32, at: u64) -> Result<bool, SimError> {
        if size == 0 {
            return Err(SimError::Invalid("size must be >= 1".into()));
        }
        let inst = self.instance_mut(id)?;
        let load = inst.load();
        if size < load {
            return Err(SimError::BelowLoad { target: size, load });
        }
        let placement = inst.placement.clone();
        let backup = self.state.clone();
        self.instance_mut(id)?.capacity = size;
        let layout = match &placement {
            Placement::Dedicated(_) => self.layout_dedicated(id, at),
            Placement::Grouped(key) => self.layout_group(key, at),
        };
        match layout {
            Ok(l) => Ok(l.booted),
            Err(e) => {
                self.state = backup;
                Err(e)
            }
        }
    }

    fn booted_vm_count(&self) -> u32 {
        self.state.vms.values().filter(|v| !v.pooled).count() as u32
    }

    /// Resizes a VM list to `needed` entries: scale-up keeps existing VMs,
    /// scale-out boots (or takes from the pool), shrink releases the tail.
    fn resize_vms(&mut self, mut vms: Vec<u64>, needed: usize, at: u64) -> Result<(Vec<u64>, bool), SimError> {
        let mut booted = false;
        if needed > vms.len() {
            let missing = needed - vms.len();
            if self.config.placement == PlacementMode::Prealloc {
                let in_use: BTreeSet<u64> = self.state.groups.values().flat_map(|g| g.vms.iter().copied()).collect();
                let free: Vec<u64> = self
                    .state
                    .vms
                    .iter()
                    .filter(|(k, v)| v.pooled && !in_use.contains(k) && !vms.contains(k))
                    .map(|(k, _)| *k)
                    .take(missing)
                    .collect();
                if free.len() < missing {
                    return Err(SimError::CapacityExceeded(format!(
                        "pre-allocated pool of {} VMs exhausted",
                        self.config.prealloc_vms
                    )));
                }
                vms.extend(free);
            } else {
                if self.booted_vm_count() + missing as u32 > self.config.resources.max_vms {
                    return Err(SimError::CapacityExceeded(format!(
                        "{} VMs allowed",
                        self.config.resources.max_vms
                    )));
                }
                for _ in 0..missing {
                    let seq = self.next_seq();
                    let id = format!("{}-vm{seq}", self.provider_id);
                    let ready_at_ms = at + self.config.latency.vm_boot_ms;
                    self.state.vms.insert(seq, Vm { id, ready_at_ms, pooled: false, hosted: Vec::new() });
                    vms.push(seq);
                }
                booted = true;
            }
        }
        while vms.len() > needed {
            let v = vms.pop().expect("non-empty");
            match self.state.vms.get_mut(&v) {
                Some(vm) if vm.pooled => vm.hosted.clear(),
                _ => {
                    self.state.vms.remove(&v);
                }
            }
        }
        Ok((vms, booted))
    }

    fn layout_dedicated(&mut self, id: &InstanceId, at: u64) -> Result<Layout, SimError> {
        let inst = &self.state.instances[id];
        let t = inst.substrate_type;
        let capacity = inst.capacity as f64;
        let Placement::Dedicated(current) = inst.placement.clone() else {
            unreachable!("dedicated layout on grouped instance")
        };
        let frac = self.config.resources.vm_fraction(t);
        if frac > 1.0 + EPS {
            return Err(SimError::CapacityExceeded(format!("one {t} participant exceeds a VM")));
        }
        let needed = vms_for_load(capacity * frac) as usize;
        let (vms, booted) = self.resize_vms(current, needed, at)?;
        let per_vm = 1.0 / frac;
        let footprint = self.config.resources.footprint(t);
        let mut remaining = capacity;
        for (i, v) in vms.iter().enumerate() {
            let take = if i + 1 == vms.len() { remaining } else { remaining.min(per_vm) };
            remaining -= take;
            let vm = self.state.vms.get_mut(v).expect("laid-out VM exists");
            vm.hosted = vec![Hosted { instance_id: id.clone(), substrate_type: t, participants: take, demand_mb: take * footprint }];
        }
        let ready_at_ms = vms.iter().map(|v| self.state.vms[v].ready_at_ms).max().unwrap_or(at);
        self.instance_mut(id)?.placement = Placement::Dedicated(vms);
        Ok(Layout { booted, ready_at_ms })
    }

    fn layout_group(&mut self, key: &str, at: u64) -> Result<Layout, SimError> {
        let group = self.state.groups.get(key).cloned().unwrap_or_default();
        let members: Vec<(InstanceId, SubstrateType, u32)> = group
            .members
            .iter()
            .map(|m| {
                let i = &self.state.instances[m];
                (m.clone(), i.substrate_type, i.capacity)
            })
            .collect();
        let mut types = group.declared.clone();
        types.extend(members.iter().map(|(_, t, _)| *t));
        let per_vm = self.config.resources.bundle_capacity(&types);
        let max_cap = members.iter().map(|(_, _, c)| *c).max().unwrap_or(0);
        if per_vm == 0 && max_cap > 0 {
            return Err(SimError::CapacityExceeded("one participant exceeds a bundle share".into()));
        }
        let needed = if max_cap == 0 { 0 } else { max_cap.div_ceil(per_vm) as usize };
        let (vms, booted) = self.resize_vms(group.vms.clone(), needed, at)?;
        for (i, v) in vms.iter().enumerate() {
            let offset = i as u32 * per_vm;
            let hosted = members
                .iter()
                .filter(|(_, _, cap)| *cap > offset)
                .map(|(id, t, cap)| {
                    let p = (cap - offset).min(per_vm) as f64;
                    Hosted {
                        instance_id: id.clone(),
                        substrate_type: *t,
                        participants: p,
                        demand_mb: p * self.config.resources.footprint(*t),
                    }
                })
                .collect();
            self.state.vms.get_mut(v).expect("laid-out VM exists").hosted = hosted;
        }
        let ready_at_ms = vms.iter().map(|v| self.state.vms[v].ready_at_ms).max().unwrap_or(at);
        if let Some(g) = self.state.groups.get_mut(key) {
            g.vms = vms;
        }
        Ok(Layout { booted, ready_at_ms })
    }

    pub fn snapshot(&self) -> IaasSnapshot {
        let r = &self.config.resources;
        let vms = self
            .state
            .vms
            .values()
            .map(|vm| VmSnapshot {
                vm_id: vm.id.clone(),
                ram_total_mb: r.ram_total_mb,
                os_overhead_mb: r.os_overhead_mb,
                vcpus: r.vcpus,
                used_mb: vm.hosted.iter().map(|h| h.demand_mb).sum(),
                ready_at_ms: vm.ready_at_ms,
                pooled: vm.pooled,
                hosted: vm
                    .hosted
                    .iter()
                    .map(|h| HostedSnapshot {
                        instance_id: h.instance_id.clone(),
                        substrate_type: h.substrate_type,
                        participants: h.participants,
                        demand_mb: h.demand_mb,
                    })
                    .collect(),
            })
            .collect();
        let instances = self
            .state
            .instances
            .iter()
            .map(|(id, inst)| InstanceSnapshot {
                instance_id: id.clone(),
                substrate_type: inst.substrate_type,
                capacity: inst.capacity,
                participants: inst.load(),
                vm_ids: self
                    .instance_vms(id)
                    .unwrap_or_default()
                    .iter()
                    .map(|v| self.state.vms[v].id.clone())
                    .collect(),
                conferences: inst
                    .conferences
                    .iter()
                    .map(|(k, c)| {
                        (
                            k.clone(),
                            SubConferenceSnapshot {
                                conference_ref: c.conference_ref.clone(),
                                members: c.members.keys().cloned().collect(),
                            },
                        )
                    })
                    .collect(),
                activated_at_ms: inst.activated_at_ms,
            })
            .collect();
        IaasSnapshot { provider_id: self.provider_id.clone(), placement: self.config.placement, vms, instances }
    }

    pub fn snapshot_json(&self) -> String {
        serde_json::to_string(&self.snapshot()).expect("snapshots serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::params::LatencyModel;
    use SubstrateType::*;

    fn sim(mode: PlacementMode) -> SimIaas {
        let mut cfg = IaasConfig::new(mode);
        cfg.prealloc_vms = 4;
        SimIaas::new("A".into(), cfg)
    }

    fn send(s: &mut SimIaas, at: u64, body: RequestBody) -> IaasResponse {
        s.handle(&IaasRequest::new("A".into(), at, body))
    }

    fn activate(s: &mut SimIaas, t: SubstrateType, size: u32, bundle: Option<BundleHint>) -> IaasResponse {
        send(s, 0, RequestBody::ActivateSubstrate { substrate_type: t, size, bundle })
    }

    fn booted(s: &SimIaas) -> usize {
        s.snapshot().vms.iter().filter(|v| !v.pooled).count()
    }

    #[test]
    fn per_substrate_mixer_200_fits_one_vm() {
        let mut s = sim(PlacementMode::PerSubstrate);
        let r = activate(&mut s, AudioMixer, 200, None);
        assert_eq!(r.status, wire::Status::Ok);
        assert_eq!(r.latency_ms, 3500);
        assert_eq!(booted(&s), 1);
        assert!((s.snapshot().vms[0].used_mb - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn per_substrate_mixer_1000_needs_two_vms() {
        let mut s = sim(PlacementMode::PerSubstrate);
        activate(&mut s, AudioMixer, 1000, None);
        let snap = s.snapshot();
        assert_eq!(snap.vms.len(), 2);
        assert!(snap.vms.iter().all(VmSnapshot::fits));
    }

    #[test]
    fn prealloc_activation_is_free() {
        let mut s = sim(PlacementMode::Prealloc);
        let r = activate(&mut s, VideoMixer, 100, None);
        assert_eq!(r.latency_ms, 0);
        assert_eq!(booted(&s), 0);
        assert_eq!(s.snapshot().vms.len(), 4);
    }

    #[test]
    fn scale_up_then_out_then_shrink() {
        let mut s = sim(PlacementMode::PerSubstrate);
        let id = activate(&mut s, AudioMixer, 200, None).instance_id.unwrap();
        let scale = |s: &mut SimIaas, size| send(s, 0, RequestBody::ScaleConference { instance_id: id.clone(), size });
        let r = scale(&mut s, 400);
        assert_eq!((r.latency_ms, booted(&s)), (10, 1));
        scale(&mut s, 600);
        let r = scale(&mut s, 800);
        assert_eq!((r.latency_ms, booted(&s)), (3010, 2));
        let first_vm = s.snapshot().vms[0].clone();
        assert!((first_vm.used_mb - 3584.0).abs() < 1e-9, "scale-up fills the first VM before scale-out");
        scale(&mut s, 100);
        assert_eq!(booted(&s), 1);
        assert_eq!(s.snapshot().vms[0].vm_id, first_vm.vm_id);
    }

    #[test]
    fn bundle_hint_sizes_shared_vm_and_second_substrate_waits_for_boot() {
        let mut s = sim(PlacementMode::Bundle);
        let hint = BundleHint { group: "c1".into(), types: BTreeSet::from([DialInSignaling, AudioMixer]) };
        let a = activate(&mut s, DialInSignaling, 358, Some(hint.clone()));
        let b = activate(&mut s, AudioMixer, 358, Some(hint.clone()));
        assert_eq!(a.latency_ms, 3500);
        assert_eq!(b.latency_ms, 3500);
        assert_eq!(booted(&s), 1);
        let ia = a.instance_id.unwrap();
        let ib = b.instance_id.unwrap();
        send(&mut s, 0, RequestBody::ScaleConference { instance_id: ia.clone(), size: 359 });
        send(&mut s, 0, RequestBody::ScaleConference { instance_id: ib.clone(), size: 359 });
        assert_eq!(booted(&s), 2);
        assert!(s.snapshot().vms.iter().all(VmSnapshot::fits));
        let r = send(
            &mut s,
            0,
            RequestBody::ConnectPeer {
                instance_id: ia.clone(),
                peer_provider_id: "A".into(),
                peer_address: "inproc://A".into(),
                peer_instance_id: ib.clone(),
            },
        );
        assert_eq!(r.latency_ms, 5);
        send(&mut s, 0, RequestBody::DeactivateSubstrate { instance_id: ia });
        send(&mut s, 0, RequestBody::DeactivateSubstrate { instance_id: ib });
        assert_eq!(booted(&s), 0);
    }

    #[test]
    fn connect_across_providers_costs_network_hop() {
        let mut s = sim(PlacementMode::PerSubstrate);
        let ia = activate(&mut s, DialInSignaling, 10, None).instance_id.unwrap();
        let r = send(
            &mut s,
            0,
            RequestBody::ConnectPeer {
                instance_id: ia,
                peer_provider_id: "B".into(),
                peer_address: "inproc://B".into(),
                peer_instance_id: "B-i1".into(),
            },
        );
        assert_eq!(r.latency_ms, LatencyModel::default().inter_iaas_connect_ms);
    }

    #[test]
    fn participants_limited_by_capacity() {
        let mut s = sim(PlacementMode::PerSubstrate);
        let id = activate(&mut s, AudioMixer, 1, None).instance_id.unwrap();
        let sc = send(
            &mut s,
            0,
            RequestBody::CreateSubstrateConference { instance_id: id.clone(), conference_ref: "c1".into() },
        )
        .substrate_conference_id
        .unwrap();
        let add = |s: &mut SimIaas| {
            send(
                s,
                0,
                RequestBody::AddParticipant {
                    instance_id: id.clone(),
                    substrate_conference_id: sc.clone(),
                    participant: ParticipantDescriptor::new("a", "sip:a@x"),
                },
            )
        };
        let r = add(&mut s);
        assert_eq!(r.latency_ms, 50);
        let r = add(&mut s);
        assert_eq!(r.code.as_deref(), Some("OverCapacity"));
        let r = send(&mut s, 0, RequestBody::ScaleConference { instance_id: id.clone(), size: 0 });
        assert_eq!(r.code.as_deref(), Some("InvalidRequest"));
    }

    #[test]
    fn vm_ceiling_rolls_back() {
        let mut cfg = IaasConfig::new(PlacementMode::PerSubstrate);
        cfg.resources.max_vms = 1;
        let mut s = SimIaas::new("A".into(), cfg);
        let id = activate(&mut s, AudioMixer, 700, None).instance_id.unwrap();
        let r = send(&mut s, 0, RequestBody::ScaleConference { instance_id: id, size: 800 });
        assert_eq!(r.code.as_deref(), Some("CapacityExceeded"));
        let snap = s.snapshot();
        assert_eq!(snap.instances[0].capacity, 700);
        assert_eq!(snap.vms.len(), 1);
        let r = activate(&mut s, DialInSignaling, 1, None);
        assert_eq!(r.code.as_deref(), Some("CapacityExceeded"));
        assert_eq!(s.snapshot().instances.len(), 1);
    }

    #[test]
    fn prealloc_pool_exhaustion() {
        let mut s = sim(PlacementMode::Prealloc);
        // audio alone packs 716 per VM
        let r = activate(&mut s, AudioMixer, 716 * 4, None);
        assert_eq!(r.status, wire::Status::Ok);
        let r = activate(&mut s, AudioMixer, 1, None);
        assert_eq!(r.code.as_deref(), Some("CapacityExceeded"));
    }

    #[test]
    fn wrong_provider_and_garbage_rejected() {
        let mut s = sim(PlacementMode::Bundle);
        let r = s.handle(&IaasRequest::new(
            "B".into(),
            0,
            RequestBody::DeactivateSubstrate { instance_id: "x".into() },
        ));
        assert_eq!(r.code.as_deref(), Some("WrongProvider"));
        let text = s.handle_json("{not json");
        assert!(text.contains("BadRequest"));
    }
}
