//! Conference domain types and the parameter contract for conference creation.
//!
//! A conference is described by a [`RawConferenceSpec`] as submitted by a
//! service provider. [`validate_spec`] checks the mandatory aspects (model,
//! media, technology), applies technology defaults, and returns a normalized
//! [`ConferenceSpec`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default expected conference size when the submitter leaves it out.
pub const DEFAULT_CONFERENCE_SIZE: u32 = 200;

/// Reserved QoS key checked against measured participant join latency.
pub const MAX_JOIN_LATENCY_KEY: &str = "max_join_latency_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConferenceModel {
    #[serde(alias = "dial_in")]
    PreArrangedDialIn,
    #[serde(alias = "dial_out")]
    PreArrangedDialOut,
    AdHoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Media {
    Audio,
    Video,
    Text,
}

impl Media {
    pub const ALL: [Media; 3] = [Media::Audio, Media::Video, Media::Text];
}

impl fmt::Display for Media {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Media::Audio => "audio",
            Media::Video => "video",
            Media::Text => "text",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technology {
    Sip,
    #[serde(alias = "web_rtc")]
    Webrtc,
    Hybrid,
}

impl Technology {
    fn sip_rules(self) -> bool {
        matches!(self, Technology::Sip | Technology::Hybrid)
    }

    fn webrtc_rules(self) -> bool {
        matches!(self, Technology::Webrtc | Technology::Hybrid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorPolicy {
    ChairModerated,
    RoundRobin,
}

/// Conferencing building blocks a substrate IaaS can offer.
///
/// Declaration order is the canonical requirement order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubstrateType {
    DialInSignaling,
    DialOutSignaling,
    AudioMixer,
    VideoMixer,
    InstantMessaging,
    FloorControl,
}

impl SubstrateType {
    pub const ALL: [SubstrateType; 6] = [
        SubstrateType::DialInSignaling,
        SubstrateType::DialOutSignaling,
        SubstrateType::AudioMixer,
        SubstrateType::VideoMixer,
        SubstrateType::InstantMessaging,
        SubstrateType::FloorControl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SubstrateType::DialInSignaling => "dial_in_signaling",
            SubstrateType::DialOutSignaling => "dial_out_signaling",
            SubstrateType::AudioMixer => "audio_mixer",
            SubstrateType::VideoMixer => "video_mixer",
            SubstrateType::InstantMessaging => "instant_messaging",
            SubstrateType::FloorControl => "floor_control",
        }
    }

    pub fn is_signaling(self) -> bool {
        matches!(self, SubstrateType::DialInSignaling | SubstrateType::DialOutSignaling)
    }

    /// The substrate carrying a medium.
    pub fn for_media(media: Media) -> SubstrateType {
        match media {
            Media::Audio => SubstrateType::AudioMixer,
            Media::Video => SubstrateType::VideoMixer,
            Media::Text => SubstrateType::InstantMessaging,
        }
    }
}

impl fmt::Display for SubstrateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SubstrateType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubstrateType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown substrate type `{s}`"))
    }
}

/// A conference description exactly as a service provider submitted it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConferenceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ConferenceModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media: Option<BTreeSet<Media>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub technology: Option<Technology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signaling_protocol: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_encodings: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_encodings: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_control: Option<BTreeSet<FloorPolicy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subconference_enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conference_size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qos_requirements: Option<BTreeMap<String, f64>>,
}

/// A validated, normalized conference description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConferenceSpec {
    pub model: ConferenceModel,
    pub media: BTreeSet<Media>,
    pub technology: Technology,
    pub signaling_protocol: Option<String>,
    pub audio_encodings: BTreeSet<String>,
    pub video_encodings: BTreeSet<String>,
    pub floor_control: Option<BTreeSet<FloorPolicy>>,
    pub subconference_enabled: bool,
    pub conference_size: u32,
    pub qos_requirements: BTreeMap<String, f64>,
}

impl ConferenceSpec {
    pub fn max_join_latency_ms(&self) -> Option<f64> {
        self.qos_requirements.get(MAX_JOIN_LATENCY_KEY).copied()
    }
}

impl From<ConferenceSpec> for RawConferenceSpec {
    fn from(spec: ConferenceSpec) -> Self {
        RawConferenceSpec {
            model: Some(spec.model),
            media: Some(spec.media),
            technology: Some(spec.technology),
            signaling_protocol: spec.signaling_protocol,
            audio_encodings: Some(spec.audio_encodings.into_iter().collect()),
            video_encodings: Some(spec.video_encodings.into_iter().collect()),
            floor_control: spec.floor_control,
            subconference_enabled: Some(spec.subconference_enabled),
            conference_size: Some(spec.conference_size),
            qos_requirements: Some(spec.qos_requirements),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("conference model: one of pre-arranged dial-in, pre-arranged dial-out or ad-hoc must be given")]
    MissingModel,
    #[error("media: at least one of audio, video and text must be given")]
    MissingMedia,
    #[error("conferencing technology: one of sip, webrtc or hybrid must be given")]
    MissingTechnology,
    #[error("signaling protocol: {0:?} technology has no mandatory protocol, so it must be specified")]
    MissingSignalingProtocol(Technology),
    #[error("{media} encodings: SIP-based conferencing has no mandatory encodings, so they must be specified")]
    MissingEncodings { media: Media },
    #[error("conference size must be at least 1")]
    InvalidConferenceSize,
    #[error("unknown conference parameter `{0}`")]
    UnknownField(String),
}

impl ValidationError {
    pub fn code(&self) -> &'static str {
        match self {
            ValidationError::MissingModel => "MissingModel",
            ValidationError::MissingMedia => "MissingMedia",
            ValidationError::MissingTechnology => "MissingTechnology",
            ValidationError::MissingSignalingProtocol(_) => "MissingSignalingProtocol",
            ValidationError::MissingEncodings { .. } => "MissingEncodings",
            ValidationError::InvalidConferenceSize => "InvalidConferenceSize",
            ValidationError::UnknownField(_) => "UnknownField",
        }
    }
}

const CANONICAL_NAMES: [&str; 6] = ["G.711", "Opus", "AMR", "H.264", "VP8", "SIP"];
const WEBRTC_AUDIO: [&str; 2] = ["G.711", "Opus"];
const WEBRTC_VIDEO: [&str; 2] = ["H.264", "VP8"];
const SIP: &str = "SIP";

/// Trims a codec or protocol name and maps known names to their canonical
/// spelling. Matching is case-insensitive.
pub fn canonical_name(name: &str) -> String {
    let trimmed = name.trim();
    CANONICAL_NAMES
        .iter()
        .find(|c| c.eq_ignore_ascii_case(trimmed))
        .map(|c| c.to_string())
        .unwrap_or_else(|| trimmed.to_string())
}

fn normalize_codecs(list: Option<&Vec<String>>) -> BTreeSet<String> {
    list.into_iter()
        .flatten()
        .map(|c| canonical_name(c))
        .filter(|c| !c.is_empty())
        .collect()
}

/// Checks a submitted conference description and returns its normalized form.
///
/// Rules are checked in a fixed order and the first violation is reported:
/// model, media, technology, signaling protocol, encodings, size.
pub fn validate_spec(raw: &RawConferenceSpec) -> Result<ConferenceSpec, ValidationError> {
    let model = raw.model.ok_or(ValidationError::MissingModel)?;
    let media = match &raw.media {
        Some(m) if !m.is_empty() => m.clone(),
        _ => return Err(ValidationError::MissingMedia),
    };
    let technology = raw.technology.ok_or(ValidationError::MissingTechnology)?;

    let given_protocol = raw
        .signaling_protocol
        .as_deref()
        .map(canonical_name)
        .filter(|p| !p.is_empty());
    let signaling_protocol = match (technology, given_protocol) {
        (Technology::Sip, None) => Some(SIP.to_string()),
        (_, Some(p)) => Some(p),
        (t, None) => return Err(ValidationError::MissingSignalingProtocol(t)),
    };

    let mut audio_encodings = normalize_codecs(raw.audio_encodings.as_ref());
    let mut video_encodings = normalize_codecs(raw.video_encodings.as_ref());

    if technology.sip_rules() {
        if media.contains(&Media::Audio) && audio_encodings.is_empty() {
            return Err(ValidationError::MissingEncodings { media: Media::Audio });
        }
        if media.contains(&Media::Video) && video_encodings.is_empty() {
            return Err(ValidationError::MissingEncodings { media: Media::Video });
        }
    }
    if technology.webrtc_rules() {
        if media.contains(&Media::Audio) {
            audio_encodings.extend(WEBRTC_AUDIO.iter().map(|c| c.to_string()));
        }
        if media.contains(&Media::Video) {
            video_encodings.extend(WEBRTC_VIDEO.iter().map(|c| c.to_string()));
        }
    }

    let conference_size = raw.conference_size.unwrap_or(DEFAULT_CONFERENCE_SIZE);
    if conference_size == 0 {
        return Err(ValidationError::InvalidConferenceSize);
    }

    Ok(ConferenceSpec {
        model,
        media,
        technology,
        signaling_protocol,
        audio_encodings,
        video_encodings,
        floor_control: raw.floor_control.clone().filter(|f| !f.is_empty()),
        subconference_enabled: raw.subconference_enabled.unwrap_or(false),
        conference_size,
        qos_requirements: raw.qos_requirements.clone().unwrap_or_default(),
    })
}

/// Every field name of a conference description.
pub const SPEC_FIELDS: [&str; 10] = [
    "model",
    "media",
    "technology",
    "signaling_protocol",
    "audio_encodings",
    "video_encodings",
    "floor_control",
    "subconference_enabled",
    "conference_size",
    "qos_requirements",
];

const RUNTIME_MUTABLE: [&str; 4] = ["media", "floor_control", "subconference_enabled", "conference_size"];

/// Whether a conference description field may change while the conference runs.
pub fn runtime_mutable(field: &str) -> Result<bool, ValidationError> {
    if !SPEC_FIELDS.contains(&field) {
        return Err(ValidationError::UnknownField(field.to_string()));
    }
    Ok(RUNTIME_MUTABLE.contains(&field))
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

string_id!(ConferenceId);
string_id!(ParticipantId);
string_id!(FloorId);
string_id!(SubconferenceId);
string_id!(ProviderId);
string_id!(InstanceId);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantDescriptor {
    pub name: String,
    pub uri: String,
}

impl ParticipantDescriptor {
    pub fn new(name: impl Into<String>, uri: impl Into<String>) -> Self {
        ParticipantDescriptor { name: name.into(), uri: uri.into() }
    }

    /// `scheme:rest` with an RFC 3986 scheme and a non-empty remainder.
    pub fn has_valid_uri(&self) -> bool {
        let Some((scheme, rest)) = self.uri.split_once(':') else {
            return false;
        };
        let mut chars = scheme.chars();
        let starts_alpha = chars.next().is_some_and(|c| c.is_ascii_alphabetic());
        starts_alpha
            && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
            && !rest.is_empty()
            && !self.uri.chars().any(char::is_whitespace)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloorDescriptor {
    pub chair: ParticipantId,
    #[serde(default)]
    pub floor_participants: BTreeSet<ParticipantId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConferenceState {
    Composing,
    Running,
    Scaling,
    Modifying,
    Terminated,
}

/// One substrate bound into a running conference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub offer_id: u64,
    pub provider_id: ProviderId,
    pub instance_id: InstanceId,
    pub substrate_conference_id: String,
    /// Provisioned size of this substrate in participants.
    pub capacity: u32,
    pub bound_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub id: ParticipantId,
    pub uri: String,
    pub descriptor: ParticipantDescriptor,
    /// Member id handed out by each bound substrate.
    pub memberships: BTreeMap<SubstrateType, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorRecord {
    pub id: FloorId,
    pub uri: String,
    /// `None` once the chair has left.
    pub chair: Option<ParticipantId>,
    pub floor_participants: BTreeSet<ParticipantId>,
    pub substrate_conference_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubconferenceRecord {
    pub id: SubconferenceId,
    pub uri: String,
    pub members: BTreeSet<ParticipantId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedMedia {
    pub media: Media,
    pub expires_at_ms: u64,
}

/// Runtime state of a composed conference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConferenceRecord {
    pub id: ConferenceId,
    pub uri: String,
    pub spec: ConferenceSpec,
    pub state: ConferenceState,
    pub bindings: BTreeMap<SubstrateType, Binding>,
    pub participants: BTreeMap<ParticipantId, ParticipantRecord>,
    pub floors: BTreeMap<FloorId, FloorRecord>,
    pub subconferences: BTreeMap<SubconferenceId, SubconferenceRecord>,
    pub timed_media: Vec<TimedMedia>,
    pub created_at_ms: u64,
    pub start_latency_ms: u64,
    #[serde(skip)]
    pub(crate) next_seq: u64,
}

impl ConferenceRecord {
    /// Provisioned capacity: the smallest binding, since any substrate can be
    /// the bottleneck. Zero when nothing is bound.
    pub fn capacity(&self) -> u32 {
        self.bindings.values().map(|b| b.capacity).min().unwrap_or(0)
    }

    pub fn participant_count(&self) -> u32 {
        self.participants.len() as u32
    }

    pub fn is_live(&self) -> bool {
        !matches!(self.state, ConferenceState::Terminated | ConferenceState::Composing)
    }

    pub(crate) fn next_id(&mut self, prefix: &str) -> String {
        self.next_seq += 1;
        format!("{prefix}{}", self.next_seq)
    }
}
