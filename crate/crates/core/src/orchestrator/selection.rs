//! Substrate requirement derivation and IaaS offer selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{ConferenceModel, ConferenceSpec, Media, SubstrateType, Technology};
use crate::registry::SubstrateOffer;

/// Score differences below this are ties.
pub const SCORE_TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstrateRequirement {
    pub substrate_type: SubstrateType,
    pub min_size: u32,
    pub required_qos: BTreeMap<String, f64>,
    pub technology: Technology,
    pub signaling_protocol: Option<String>,
    /// Codecs relevant to the substrate; empty for non-media substrates.
    pub encodings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionWeights {
    pub w_price: f64,
    pub w_qos: f64,
}

impl Default for SelectionWeights {
    fn default() -> Self {
        SelectionWeights { w_price: 0.5, w_qos: 0.5 }
    }
}

impl SelectionWeights {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.w_price >= 0.0 && self.w_qos >= 0.0 && self.w_price + self.w_qos > 0.0) {
            return Err("selection weights must be >= 0 with a positive sum".into());
        }
        Ok(())
    }
}

/// Substrate types a conference description needs, in canonical order.
pub fn required_types(spec: &ConferenceSpec) -> Vec<SubstrateType> {
    let signaling = match spec.model {
        ConferenceModel::PreArrangedDialIn | ConferenceModel::AdHoc => SubstrateType::DialInSignaling,
        ConferenceModel::PreArrangedDialOut => SubstrateType::DialOutSignaling,
    };
    let mut types: Vec<SubstrateType> = std::iter::once(signaling)
        .chain(spec.media.iter().map(|&m| SubstrateType::for_media(m)))
        .chain(spec.floor_control.as_ref().map(|_| SubstrateType::FloorControl))
        .collect();
    types.sort();
    types.dedup();
    types
}

pub fn determine_substrates(spec: &ConferenceSpec) -> Vec<SubstrateRequirement> {
    required_types(spec).into_iter().map(|t| requirement_for(spec, t)).collect()
}

/// Requirement for one substrate type under a conference description.
pub fn requirement_for(spec: &ConferenceSpec, t: SubstrateType) -> SubstrateRequirement {
    let encodings = match t {
        SubstrateType::AudioMixer => spec.audio_encodings.iter().cloned().collect(),
        SubstrateType::VideoMixer => spec.video_encodings.iter().cloned().collect(),
        _ => Vec::new(),
    };
    SubstrateRequirement {
        substrate_type: t,
        min_size: spec.conference_size,
        required_qos: spec.qos_requirements.clone(),
        technology: spec.technology,
        signaling_protocol: t.is_signaling().then(|| spec.signaling_protocol.clone()).flatten(),
        encodings,
    }
}

/// The medium a substrate type carries, if any.
pub fn media_of(t: SubstrateType) -> Option<Media> {
    Media::ALL.into_iter().find(|&m| SubstrateType::for_media(m) == t)
}

/// Weighted min-max score of every candidate, in candidate order.
///
/// `score = w_price * (1 - norm(price)) + w_qos * (1 - norm(activation latency))`
/// where `norm` maps the candidate range onto `[0, 1]` and is 0 when all
/// values are equal.
pub fn scores(candidates: &[SubstrateOffer], weights: &SelectionWeights) -> Vec<f64> {
    let range = |f: &dyn Fn(&SubstrateOffer) -> f64| {
        candidates.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let price = |o: &SubstrateOffer| o.price_per_participant_hour;
    let latency = |o: &SubstrateOffer| o.activation_latency_ms();
    let (p_lo, p_hi) = range(&price);
    let (l_lo, l_hi) = range(&latency);
    let norm = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    candidates
        .iter()
        .map(|o| {
            weights.w_price * (1.0 - norm(price(o), p_lo, p_hi)) + weights.w_qos * (1.0 - norm(latency(o), l_lo, l_hi))
        })
        .collect()
}

/// Picks the best-scoring candidate. Ties go to the smallest
/// `(provider_id, offer_id)`.
pub fn select_offer(
    req: &SubstrateRequirement,
    candidates: &[SubstrateOffer],
    weights: &SelectionWeights,
) -> Result<SubstrateOffer, SubstrateType> {
    let s = scores(candidates, weights);
    let best = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    candidates
        .iter()
        .zip(&s)
        .filter(|(_, &score)| score >= best - SCORE_TIE_EPS)
        .map(|(o, _)| o)
        .min_by(|a, b| (&a.provider_id, a.offer_id).cmp(&(&b.provider_id, b.offer_id)))
        .cloned()
        .ok_or(req.substrate_type)
}
