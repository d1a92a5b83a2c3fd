//! Random join/leave workloads against a live, autoscaled conference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ParticipantDescriptor, ParticipantId};
use crate::orchestrator::OrchestratorConfig;

use super::audit::{audit, AuditReport};
use super::runner::deploy;
use super::scenario::{Mode, ScenarioConfig};
use super::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzOutcome {
    pub steps: u32,
    pub joins: u32,
    pub leaves: u32,
    pub peak_participants: u32,
    pub scale_events: usize,
    /// Points where capacity fell below the participant count.
    pub under_capacity: Vec<(u64, u32, u32)>,
    /// Replay of the whole log, ending after termination.
    pub audit: AuditReport,
    /// Substrate instances the providers still hold after termination.
    pub leftover_instances: usize,
}

/// Runs `steps` random joins and leaves, letting virtual time pass between
/// them so periodic scaling ticks fire. Every `check_every` steps is a
/// quiescent point.
pub fn scaling_fuzz(mode: Mode, seed: u64, steps: u32, check_every: u32) -> Result<FuzzOutcome, BenchError> {
    let cfg = ScenarioConfig {
        orchestrator: OrchestratorConfig { autoscale: true, ..Default::default() },
        seed,
        ..ScenarioConfig::new(mode)
    };
    let d = deploy(&cfg, seed)?;
    let o = d.orchestrator();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = o.create_conference_spec(cfg.spec()?)?.id;
    let mut present: Vec<ParticipantId> = Vec::new();
    let mut out = FuzzOutcome {
        steps,
        joins: 0,
        leaves: 0,
        peak_participants: 0,
        scale_events: 0,
        under_capacity: Vec::new(),
        audit: AuditReport::default(),
        leftover_instances: 0,
    };
    // drift between growth and shrink phases so both directions get exercised
    let mut bias = 0.75;
    for step in 1..=steps {
        if step % 1000 == 0 {
            bias = 1.0 - bias;
        }
        o.advance_by(rng.random_range(0..20_000));
        if present.is_empty() || rng.random_bool(bias) {
            let n = step;
            let p = o.add_participant(&id, ParticipantDescriptor::new(format!("f{n}"), format!("sip:f{n}@fuzz.example")))?;
            present.push(p.participant.id);
            out.joins += 1;
        } else {
            let p = present.swap_remove(rng.random_range(0..present.len()));
            o.remove_participant(&id, &p)?;
            out.leaves += 1;
        }
        out.peak_participants = out.peak_participants.max(present.len() as u32);
        if step % check_every == 0 {
            let rec = o.conference(&id).expect("conference exists");
            if rec.capacity() < rec.participant_count() {
                out.under_capacity.push((o.now_ms(), rec.capacity(), rec.participant_count()));
            }
            o.mark_quiescent();
        }
    }
    o.terminate_conference(&id)?;
    let left = o.mark_quiescent();
    out.leftover_instances = left.iter().map(|s| s.instances.len()).sum();
    let events = o.log().events();
    out.scale_events = events.iter().filter(|e| matches!(e.kind, crate::events::EventKind::ScaleRequested { .. })).count();
    out.audit = audit(&events);
    Ok(out)
}
