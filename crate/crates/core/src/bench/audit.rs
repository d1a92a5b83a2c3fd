//! Event-log replay checks.
//!
//! The log is replayed conference by conference. At every quiescent marker
//! the replayed state is compared with the provider snapshots the marker
//! carries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::events::{Event, EventKind};
use crate::model::{ConferenceId, InstanceId, ProviderId, SubstrateType};
use crate::sim::IaasSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conference: Option<ConferenceId>,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub events: usize,
    pub quiescent_points: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Default)]
struct Replayed {
    live: bool,
    bindings: BTreeMap<SubstrateType, (ProviderId, InstanceId, u32)>,
    participants: u32,
}

impl Replayed {
    fn capacity(&self) -> u32 {
        self.bindings.values().map(|b| b.2).min().unwrap_or(0)
    }
}

pub fn audit(events: &[Event]) -> AuditReport {
    let mut confs: BTreeMap<ConferenceId, Replayed> = BTreeMap::new();
    let mut report = AuditReport { events: events.len(), ..Default::default() };
    for e in events {
        let Some(id) = &e.conference else {
            if let EventKind::Quiescent { iaas } = &e.kind {
                report.quiescent_points += 1;
                check(e.t_ms, &confs, iaas, &mut report.violations);
            }
            continue;
        };
        let c = confs.entry(id.clone()).or_default();
        match &e.kind {
            EventKind::ConferenceCreated { .. } => c.live = true,
            EventKind::ConferenceTerminated => c.live = false,
            EventKind::SubstrateBound { substrate_type, provider_id, instance_id, capacity } => {
                c.bindings.insert(*substrate_type, (provider_id.clone(), instance_id.clone(), *capacity));
            }
            EventKind::SubstrateReleased { substrate_type, .. } => {
                c.bindings.remove(substrate_type);
            }
            EventKind::BindingScaled { substrate_type, capacity } => {
                if let Some(b) = c.bindings.get_mut(substrate_type) {
                    b.2 = *capacity;
                }
            }
            EventKind::ParticipantJoined { participants, .. } | EventKind::ParticipantLeft { participants, .. } => {
                c.participants = *participants
            }
            _ => {}
        }
    }
    report
}

fn check(t_ms: u64, confs: &BTreeMap<ConferenceId, Replayed>, iaas: &[IaasSnapshot], out: &mut Vec<Violation>) {
    let mut push = |conference: Option<&ConferenceId>, rule: &str, detail: String| {
        out.push(Violation { t_ms, conference: conference.cloned(), rule: rule.into(), detail })
    };
    let mut owned: BTreeSet<(&ProviderId, &InstanceId)> = BTreeSet::new();
    for (id, c) in confs {
        for (t, (p, inst, cap)) in &c.bindings {
            owned.insert((p, inst));
            if !c.live {
                push(Some(id), "released_on_terminate", format!("{t} instance {inst} still bound"));
                continue;
            }
            let hosted = iaas.iter().find(|s| s.provider_id == *p).and_then(|s| s.instance(inst));
            match hosted {
                None => push(Some(id), "binding_exists", format!("{t} instance {inst} missing at {p}")),
                Some(h) if h.capacity != *cap => push(
                    Some(id),
                    "capacity_agrees",
                    format!("{t} instance {inst}: log says {cap}, {p} says {}", h.capacity),
                ),
                Some(_) => {}
            }
        }
        if c.live && c.capacity() < c.participants {
            push(
                Some(id),
                "capacity_covers_participants",
                format!("capacity {} < {} participants", c.capacity(), c.participants),
            );
        }
    }
    for s in iaas {
        for inst in &s.instances {
            if !owned.contains(&(&s.provider_id, &inst.instance_id)) {
                push(
                    None,
                    "no_orphan_substrates",
                    format!("{} instance {} at {} belongs to no conference", inst.substrate_type, inst.instance_id, s.provider_id),
                );
            }
        }
        for vm in &s.vms {
            if !vm.fits() {
                push(
                    None,
                    "packing_feasible",
                    format!("{} on {} uses {:.1} MB of {:.1}", vm.vm_id, s.provider_id, vm.used_mb, vm.ram_total_mb - vm.os_overhead_mb),
                );
            }
        }
    }
}

/// Mean join latency recomputed from the log.
pub fn mean_join_ms(events: &[Event]) -> Option<f64> {
    let samples: Vec<u64> = events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::ParticipantJoined { latency_ms, .. } => Some(latency_ms),
            _ => None,
        })
        .collect();
    (!samples.is_empty()).then(|| samples.iter().sum::<u64>() as f64 / samples.len() as f64)
}

/// Start latencies of every created conference, in log order.
pub fn start_times_ms(events: &[Event]) -> Vec<u64> {
    events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::ConferenceCreated { latency_ms, .. } => Some(latency_ms),
            _ => None,
        })
        .collect()
}
