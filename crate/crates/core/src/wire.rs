//! PaaS/IaaS wire protocol (version 1).
//!
//! Every message is one JSON object. Requests carry an envelope
//! (`proto_version`, `request_id`, `provider_id`, `at_ms`) and a `kind`
//! discriminator with kind-specific fields. Responses echo `request_id`,
//! report `status` and the simulated `latency_ms`, and carry the ids the
//! request kind promises. Sizes are always participant counts.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{InstanceId, ParticipantDescriptor, ProviderId, SubstrateType};

pub const PROTO_VERSION: u32 = 1;

/// Asks a bundle-placement IaaS to co-locate substrates of the same group
/// and to size the shared VM for all listed types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleHint {
    pub group: String,
    pub types: BTreeSet<SubstrateType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaasRequest {
    pub proto_version: u32,
    pub request_id: u64,
    pub provider_id: ProviderId,
    /// Virtual time at which the request is issued.
    pub at_ms: u64,
    #[serde(flatten)]
    pub body: RequestBody,
}

impl IaasRequest {
    /// Request id is assigned by the handler on send.
    pub fn new(provider_id: ProviderId, at_ms: u64, body: RequestBody) -> Self {
        IaasRequest { proto_version: PROTO_VERSION, request_id: 0, provider_id, at_ms, body }
    }

    pub fn kind(&self) -> RequestKind {
        self.body.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequestBody {
    ActivateSubstrate {
        substrate_type: SubstrateType,
        size: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bundle: Option<BundleHint>,
    },
    DeactivateSubstrate {
        instance_id: InstanceId,
    },
    CreateSubstrateConference {
        instance_id: InstanceId,
        conference_ref: String,
    },
    DestroySubstrateConference {
        instance_id: InstanceId,
        substrate_conference_id: String,
    },
    AddParticipant {
        instance_id: InstanceId,
        substrate_conference_id: String,
        participant: ParticipantDescriptor,
    },
    RemoveParticipant {
        instance_id: InstanceId,
        substrate_conference_id: String,
        member_id: String,
    },
    ConnectPeer {
        instance_id: InstanceId,
        peer_provider_id: ProviderId,
        peer_address: String,
        peer_instance_id: InstanceId,
    },
    ScaleConference {
        instance_id: InstanceId,
        size: u32,
    },
}

impl RequestBody {
    pub fn kind(&self) -> RequestKind {
        match self {
            RequestBody::ActivateSubstrate { .. } => RequestKind::ActivateSubstrate,
            RequestBody::DeactivateSubstrate { .. } => RequestKind::DeactivateSubstrate,
            RequestBody::CreateSubstrateConference { .. } => RequestKind::CreateSubstrateConference,
            RequestBody::DestroySubstrateConference { .. } => RequestKind::DestroySubstrateConference,
            RequestBody::AddParticipant { .. } => RequestKind::AddParticipant,
            RequestBody::RemoveParticipant { .. } => RequestKind::RemoveParticipant,
            RequestBody::ConnectPeer { .. } => RequestKind::ConnectPeer,
            RequestBody::ScaleConference { .. } => RequestKind::ScaleConference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    ActivateSubstrate,
    DeactivateSubstrate,
    CreateSubstrateConference,
    DestroySubstrateConference,
    AddParticipant,
    RemoveParticipant,
    ConnectPeer,
    ScaleConference,
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaasResponse {
    pub proto_version: u32,
    pub request_id: u64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<InstanceId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substrate_conference_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member_id: Option<String>,
    /// Provisioned participants after activation or scaling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u32>,
    pub latency_ms: u64,
}

impl IaasResponse {
    pub fn ok(request_id: u64, latency_ms: u64) -> Self {
        IaasResponse {
            proto_version: PROTO_VERSION,
            request_id,
            status: Status::Ok,
            code: None,
            message: None,
            instance_id: None,
            substrate_conference_id: None,
            member_id: None,
            capacity: None,
            latency_ms,
        }
    }

    pub fn error(request_id: u64, code: &str, message: impl Into<String>, latency_ms: u64) -> Self {
        IaasResponse {
            status: Status::Error,
            code: Some(code.to_string()),
            message: Some(message.into()),
            ..IaasResponse::ok(request_id, latency_ms)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("response correlates to request {got}, expected {expected}")]
    Correlation { expected: u64, got: u64 },
    #[error("{kind} response is missing `{field}`")]
    MissingField { kind: RequestKind, field: &'static str },
}

pub fn encode_request(req: &IaasRequest) -> String {
    serde_json::to_string(req).expect("requests always serialize")
}

pub fn decode_request(text: &str) -> Result<IaasRequest, WireError> {
    let req: IaasRequest = serde_json::from_str(text).map_err(|e| WireError::Malformed(e.to_string()))?;
    if req.proto_version != PROTO_VERSION {
        return Err(WireError::Version(req.proto_version));
    }
    Ok(req)
}

pub fn encode_response(resp: &IaasResponse) -> String {
    serde_json::to_string(resp).expect("responses always serialize")
}

/// Decodes a response without checking it against a request.
pub fn decode_response(text: &str) -> Result<IaasResponse, WireError> {
    let resp: IaasResponse = serde_json::from_str(text).map_err(|e| WireError::Malformed(e.to_string()))?;
    if resp.proto_version != PROTO_VERSION {
        return Err(WireError::Version(resp.proto_version));
    }
    Ok(resp)
}

/// Decodes a response and checks correlation and the ids promised by the
/// request kind.
pub fn decode_response_for(text: &str, req: &IaasRequest) -> Result<IaasResponse, WireError> {
    let resp = decode_response(text)?;
    if resp.request_id != req.request_id {
        return Err(WireError::Correlation { expected: req.request_id, got: resp.request_id });
    }
    if resp.status == Status::Ok {
        let kind = req.kind();
        let missing = |field| Err(WireError::MissingField { kind, field });
        match kind {
            RequestKind::ActivateSubstrate if resp.instance_id.is_none() => return missing("instance_id"),
            RequestKind::ActivateSubstrate | RequestKind::ScaleConference if resp.capacity.is_none() => {
                return missing("capacity")
            }
            RequestKind::CreateSubstrateConference if resp.substrate_conference_id.is_none() => {
                return missing("substrate_conference_id")
            }
            RequestKind::AddParticipant if resp.member_id.is_none() => return missing("member_id"),
            _ => {}
        }
    }
    Ok(resp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn activate() -> IaasRequest {
        let mut r = IaasRequest::new(
            "A".into(),
            1500,
            RequestBody::ActivateSubstrate { substrate_type: SubstrateType::AudioMixer, size: 200, bundle: None },
        );
        r.request_id = 7;
        r
    }

    #[test]
    fn request_layout_is_flat() {
        let v: serde_json::Value = serde_json::from_str(&encode_request(&activate())).unwrap();
        assert_eq!(v["kind"], "activate_substrate");
        assert_eq!(v["proto_version"], 1);
        assert_eq!(v["size"], 200);
        assert_eq!(v["substrate_type"], "audio_mixer");
        assert!(v.get("bundle").is_none());
    }

    #[test]
    fn missing_promised_id_is_a_protocol_error() {
        let req = activate();
        let mut resp = IaasResponse::ok(7, 3500);
        resp.capacity = Some(200);
        let err = decode_response_for(&encode_response(&resp), &req).unwrap_err();
        assert_eq!(err, WireError::MissingField { kind: RequestKind::ActivateSubstrate, field: "instance_id" });
        resp.instance_id = Some("A-i1".into());
        assert!(decode_response_for(&encode_response(&resp), &req).is_ok());
    }

    #[test]
    fn error_responses_need_no_ids() {
        let resp = IaasResponse::error(7, "CapacityExceeded", "no VMs left", 0);
        let got = decode_response_for(&encode_response(&resp), &activate()).unwrap();
        assert_eq!(got.status, Status::Error);
    }

    #[test]
    fn correlation_and_version_checked() {
        let mut resp = IaasResponse::ok(8, 0);
        resp.instance_id = Some("x".into());
        resp.capacity = Some(1);
        assert!(matches!(
            decode_response_for(&encode_response(&resp), &activate()),
            Err(WireError::Correlation { expected: 7, got: 8 })
        ));
        let text = encode_request(&activate()).replace("\"proto_version\":1", "\"proto_version\":2");
        assert_eq!(decode_request(&text), Err(WireError::Version(2)));
        assert!(matches!(decode_request("{\"kind\":\"reboot\"}"), Err(WireError::Malformed(_))));
    }

    #[test]
    fn kind_display_matches_wire_name() {
        assert_eq!(RequestKind::ConnectPeer.to_string(), "connect_peer");
    }
}
