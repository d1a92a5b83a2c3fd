//! Seeded random generators for property tests and the acceptance suite.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::model::{
    ConferenceModel, FloorPolicy, Media, ParticipantDescriptor, ProviderId, RawConferenceSpec, SubstrateType,
    Technology,
};
use crate::registry::{OfferId, SubstrateOffer, ACTIVATION_LATENCY_KEY};
use crate::wire::{BundleHint, IaasRequest, IaasResponse, RequestBody, Status, PROTO_VERSION};

const ALPHABET: &[char] = &['a', 'Z', '0', '-', '_', '/', ' ', '"', '\\', 'é', '会', '\n', '{', '}'];

pub fn text<R: Rng>(rng: &mut R, max: usize) -> String {
    let len = rng.random_range(0..=max);
    (0..len).map(|_| *ALPHABET.choose(rng).expect("non-empty")).collect()
}

fn id<R: Rng>(rng: &mut R) -> String {
    format!("{}-{}", ["iaas", "i", "sc", "m"].choose(rng).expect("non-empty"), rng.random_range(0..1000))
}

pub fn substrate_type<R: Rng>(rng: &mut R) -> SubstrateType {
    *SubstrateType::ALL.choose(rng).expect("non-empty")
}

pub fn request<R: Rng>(rng: &mut R) -> IaasRequest {
    let body = match rng.random_range(0..8) {
        0 => RequestBody::ActivateSubstrate {
            substrate_type: substrate_type(rng),
            size: rng.random(),
            bundle: rng.random_bool(0.5).then(|| BundleHint {
                group: text(rng, 8),
                types: (0..rng.random_range(0..4)).map(|_| substrate_type(rng)).collect(),
            }),
        },
        1 => RequestBody::DeactivateSubstrate { instance_id: id(rng).into() },
        2 => RequestBody::CreateSubstrateConference { instance_id: id(rng).into(), conference_ref: text(rng, 12) },
        3 => RequestBody::DestroySubstrateConference { instance_id: id(rng).into(), substrate_conference_id: id(rng) },
        4 => RequestBody::AddParticipant {
            instance_id: id(rng).into(),
            substrate_conference_id: id(rng),
            participant: ParticipantDescriptor::new(text(rng, 10), text(rng, 20)),
        },
        5 => RequestBody::RemoveParticipant {
            instance_id: id(rng).into(),
            substrate_conference_id: id(rng),
            member_id: id(rng),
        },
        6 => RequestBody::ConnectPeer {
            instance_id: id(rng).into(),
            peer_provider_id: id(rng).into(),
            peer_address: text(rng, 16),
            peer_instance_id: id(rng).into(),
        },
        _ => RequestBody::ScaleConference { instance_id: id(rng).into(), size: rng.random() },
    };
    IaasRequest {
        proto_version: PROTO_VERSION,
        request_id: rng.random(),
        provider_id: ProviderId(id(rng)),
        at_ms: rng.random(),
        body,
    }
}

pub fn response<R: Rng>(rng: &mut R) -> IaasResponse {
    let maybe = |rng: &mut R| rng.random_bool(0.5).then(|| id(rng));
    let ok = rng.random_bool(0.7);
    IaasResponse {
        proto_version: PROTO_VERSION,
        request_id: rng.random(),
        status: if ok { Status::Ok } else { Status::Error },
        code: (!ok).then(|| text(rng, 10)),
        message: (!ok).then(|| text(rng, 30)),
        instance_id: maybe(rng).map(Into::into),
        substrate_conference_id: maybe(rng),
        member_id: maybe(rng),
        capacity: rng.random_bool(0.5).then(|| rng.random()),
        latency_ms: rng.random_range(0..1 << 40),
    }
}

/// Between 1 and `max` offers of one type. Prices and latencies come from
/// small grids so that ties occur.
pub fn offers<R: Rng>(rng: &mut R, t: SubstrateType, max: usize) -> Vec<SubstrateOffer> {
    let providers = ["A", "B", "C", "D"];
    let n = rng.random_range(1..=max);
    (0..n)
        .map(|i| {
            let price = rng.random_range(1..=8) as f64 * 0.0025;
            let latency = rng.random_range(0..=6) as f64 * 250.0;
            let provider = providers.choose(rng).expect("non-empty");
            let mut o = SubstrateOffer::new(provider, t, price, rng.random_range(100..5000))
                .with_qos(ACTIVATION_LATENCY_KEY, latency);
            o.offer_id = OfferId(i as u64 + 1);
            o
        })
        .collect()
}

/// Any combination of set and unset description fields.
pub fn raw_spec<R: Rng>(rng: &mut R) -> RawConferenceSpec {
    let codecs = ["G.711", "opus", " AMR ", "H.264", "vp8", "", "g.722"];
    let pick_codecs = |rng: &mut R| -> Vec<String> {
        (0..rng.random_range(0..3)).map(|_| codecs.choose(rng).expect("non-empty").to_string()).collect()
    };
    RawConferenceSpec {
        model: rng.random_bool(0.8).then(|| {
            *[ConferenceModel::PreArrangedDialIn, ConferenceModel::PreArrangedDialOut, ConferenceModel::AdHoc]
                .choose(rng)
                .expect("non-empty")
        }),
        media: rng
            .random_bool(0.85)
            .then(|| Media::ALL.into_iter().filter(|_| rng.random_bool(0.5)).collect::<BTreeSet<_>>()),
        technology: rng.random_bool(0.8).then(|| {
            *[Technology::Sip, Technology::Webrtc, Technology::Hybrid].choose(rng).expect("non-empty")
        }),
        signaling_protocol: rng.random_bool(0.5).then(|| ["SIP", "wss", "sip", " "].choose(rng).expect("non-empty").to_string()),
        audio_encodings: rng.random_bool(0.6).then(|| pick_codecs(rng)),
        video_encodings: rng.random_bool(0.6).then(|| pick_codecs(rng)),
        floor_control: rng.random_bool(0.3).then(|| {
            [FloorPolicy::ChairModerated, FloorPolicy::RoundRobin].into_iter().filter(|_| rng.random_bool(0.5)).collect()
        }),
        subconference_enabled: rng.random_bool(0.3).then(|| rng.random()),
        conference_size: rng.random_bool(0.5).then(|| rng.random_range(0..5000)),
        qos_requirements: rng
            .random_bool(0.2)
            .then(|| BTreeMap::from([("max_join_latency_ms".to_string(), rng.random_range(0..1000) as f64)])),
    }
}
