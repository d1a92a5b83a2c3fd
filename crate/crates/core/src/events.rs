//! Structured event log, one JSON object per line.

use std::io::{self, BufRead, Write};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::model::{ConferenceId, ConferenceState, FloorId, InstanceId, Media, ParticipantId, ProviderId, SubconferenceId, SubstrateType};
use crate::sim::IaasSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conference: Option<ConferenceId>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    ConferenceCreated { latency_ms: u64, capacity: u32 },
    ConferenceFailed { code: String, message: String },
    StateChanged { state: ConferenceState },
    SubstrateBound { substrate_type: SubstrateType, provider_id: ProviderId, instance_id: InstanceId, capacity: u32 },
    SubstrateReleased { substrate_type: SubstrateType, provider_id: ProviderId, instance_id: InstanceId },
    BindingScaled { substrate_type: SubstrateType, capacity: u32 },
    ScaleRequested { from: u32, target: u32 },
    ScaleFailed { provider_id: ProviderId, message: String },
    ParticipantJoined { participant_id: ParticipantId, participants: u32, latency_ms: u64 },
    ParticipantLeft { participant_id: ParticipantId, participants: u32 },
    FloorCreated { floor_id: FloorId },
    FloorChairVacant { floor_id: FloorId },
    SubconferenceCreated { subconference_id: SubconferenceId },
    SubconferenceRemoved { subconference_id: SubconferenceId },
    MediaAdded { media: Media, #[serde(default, skip_serializing_if = "Option::is_none")] expires_at_ms: Option<u64> },
    MediaRemoved { media: Media },
    ConferenceTerminated,
    IaasError { provider_id: ProviderId, code: String, message: String },
    /// Nothing in flight; carries the simulator state of every provider.
    Quiescent { iaas: Vec<IaasSnapshot> },
}

/// Append-only in-memory event log.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Mutex<Vec<Event>>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, t_ms: u64, conference: Option<&ConferenceId>, kind: EventKind) {
        self.events.lock().unwrap().push(Event { t_ms, conference: conference.cloned(), kind });
    }

    pub fn events(&self) -> Vec<Event> {
        self.events.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.events.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in self.events.lock().unwrap().iter() {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Parses a JSON-lines event log. Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Vec<Event>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line)
            .map_err(|err| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {err}", i + 1)))?;
        out.push(e);
    }
    Ok(out)
}
