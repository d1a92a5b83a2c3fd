//! Substrate information repository: which IaaS provider offers which
//! substrate, at what price and QoS.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProviderId, SubstrateType};

pub const ACTIVATION_LATENCY_KEY: &str = "activation_latency_ms";
pub const OP_LATENCY_KEY: &str = "op_latency_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OfferId(pub u64);

impl fmt::Display for OfferId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstrateOffer {
    /// Assigned by the repository; ignored on insert.
    #[serde(default)]
    pub offer_id: OfferId,
    pub provider_id: ProviderId,
    pub substrate_type: SubstrateType,
    pub price_per_participant_hour: f64,
    #[serde(default)]
    pub qos: BTreeMap<String, f64>,
    #[serde(default)]
    pub sla: BTreeMap<String, String>,
    pub max_conference_size: u32,
}

impl Default for OfferId {
    fn default() -> Self {
        OfferId(0)
    }
}

impl SubstrateOffer {
    pub fn new(provider: &str, substrate_type: SubstrateType, price: f64, max_size: u32) -> Self {
        SubstrateOffer {
            offer_id: OfferId(0),
            provider_id: ProviderId::from(provider),
            substrate_type,
            price_per_participant_hour: price,
            qos: BTreeMap::new(),
            sla: BTreeMap::new(),
            max_conference_size: max_size,
        }
    }

    pub fn with_qos(mut self, key: &str, value: f64) -> Self {
        self.qos.insert(key.to_string(), value);
        self
    }

    pub fn activation_latency_ms(&self) -> f64 {
        self.qos.get(ACTIVATION_LATENCY_KEY).copied().unwrap_or(0.0)
    }

    fn check(&self) -> Result<(), RegistryError> {
        if !(self.price_per_participant_hour >= 0.0) || !self.price_per_participant_hour.is_finite() {
            return Err(RegistryError::InvalidOffer("price must be a finite number >= 0".into()));
        }
        if self.max_conference_size < 1 {
            return Err(RegistryError::InvalidOffer("max_conference_size must be >= 1".into()));
        }
        if let Some((k, _)) = self.qos.iter().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(RegistryError::InvalidOffer(format!("qos `{k}` must be a finite number >= 0")));
        }
        Ok(())
    }
}

/// Partial update of an offer. Absent fields keep their stored value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfferUpdate {
    #[serde(default)]
    pub price_per_participant_hour: Option<f64>,
    #[serde(default)]
    pub qos: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub sla: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub max_conference_size: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderEndpoint {
    pub id: ProviderId,
    /// `inproc://name` or `http://host:port`.
    pub address: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("unknown provider `{0}`")]
    UnknownProvider(ProviderId),
    #[error("invalid offer: {0}")]
    InvalidOffer(String),
    #[error("offer {0} not found")]
    NotFound(OfferId),
    #[error("provider `{0}` is already registered with a different address")]
    ProviderConflict(ProviderId),
    #[error("seed file: {0}")]
    Seed(String),
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::UnknownProvider(_) => "UnknownProvider",
            RegistryError::InvalidOffer(_) => "InvalidOffer",
            RegistryError::NotFound(_) => "OfferNotFound",
            RegistryError::ProviderConflict(_) => "ProviderConflict",
            RegistryError::Seed(_) => "SeedError",
        }
    }
}

/// In-memory offer repository. Offers keep insertion order; ids are never
/// reused.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    providers: BTreeMap<ProviderId, ProviderEndpoint>,
    offers: Vec<SubstrateOffer>,
    last_id: u64,
    default_qos: BTreeMap<String, f64>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Values filled into an offer's QoS map when it lacks a key.
    pub fn with_default_qos(mut self, defaults: BTreeMap<String, f64>) -> Self {
        self.default_qos = defaults;
        self
    }

    pub fn register_provider(&mut self, endpoint: ProviderEndpoint) -> Result<(), RegistryError> {
        match self.providers.get(&endpoint.id) {
            Some(existing) if existing.address != endpoint.address => {
                Err(RegistryError::ProviderConflict(endpoint.id))
            }
            _ => {
                self.providers.insert(endpoint.id.clone(), endpoint);
                Ok(())
            }
        }
    }

    pub fn provider(&self, id: &ProviderId) -> Option<&ProviderEndpoint> {
        self.providers.get(id)
    }

    pub fn providers(&self) -> impl Iterator<Item = &ProviderEndpoint> {
        self.providers.values()
    }

    fn fill_defaults(&self, offer: &mut SubstrateOffer) {
        for (k, v) in &self.default_qos {
            offer.qos.entry(k.clone()).or_insert(*v);
        }
    }

    pub fn add_offer(&mut self, mut offer: SubstrateOffer) -> Result<OfferId, RegistryError> {
        if !self.providers.contains_key(&offer.provider_id) {
            return Err(RegistryError::UnknownProvider(offer.provider_id));
        }
        offer.check()?;
        self.fill_defaults(&mut offer);
        self.last_id += 1;
        offer.offer_id = OfferId(self.last_id);
        self.offers.push(offer);
        Ok(OfferId(self.last_id))
    }

    pub fn remove_offer(&mut self, id: OfferId) -> Result<SubstrateOffer, RegistryError> {
        let pos = self
            .offers
            .iter()
            .position(|o| o.offer_id == id)
            .ok_or(RegistryError::NotFound(id))?;
        Ok(self.offers.remove(pos))
    }

    pub fn update_offer(&mut self, id: OfferId, update: OfferUpdate) -> Result<&SubstrateOffer, RegistryError> {
        let pos = self
            .offers
            .iter()
            .position(|o| o.offer_id == id)
            .ok_or(RegistryError::NotFound(id))?;
        let mut next = self.offers[pos].clone();
        if let Some(p) = update.price_per_participant_hour {
            next.price_per_participant_hour = p;
        }
        if let Some(q) = update.qos {
            next.qos.extend(q);
        }
        if let Some(s) = update.sla {
            next.sla.extend(s);
        }
        if let Some(m) = update.max_conference_size {
            next.max_conference_size = m;
        }
        next.check()?;
        self.offers[pos] = next;
        Ok(&self.offers[pos])
    }

    pub fn offer(&self, id: OfferId) -> Option<&SubstrateOffer> {
        self.offers.iter().find(|o| o.offer_id == id)
    }

    pub fn offers(&self) -> &[SubstrateOffer] {
        &self.offers
    }

    /// Stored offers of one type able to host `min_size` participants, in
    /// insertion order.
    pub fn query_offers(&self, substrate_type: SubstrateType, min_size: u32) -> Vec<SubstrateOffer> {
        self.offers
            .iter()
            .filter(|o| o.substrate_type == substrate_type && o.max_conference_size >= min_size)
            .cloned()
            .collect()
    }

    /// Loads a seed document (see [`SeedFile`]).
    pub fn from_seed_str(text: &str) -> Result<Registry, RegistryError> {
        let seed: SeedFile = toml::from_str(text).map_err(|e| RegistryError::Seed(e.to_string()))?;
        Registry::from_seed(seed)
    }

    pub fn from_seed(seed: SeedFile) -> Result<Registry, RegistryError> {
        let mut reg = Registry::new().with_default_qos(seed.defaults);
        for p in seed.providers {
            reg.register_provider(p)?;
        }
        for o in seed.offers {
            reg.add_offer(o)?;
        }
        Ok(reg)
    }
}

/// Startup seed document, TOML.
///
/// ```toml
/// [defaults]
/// activation_latency_ms = 3500
/// op_latency_ms = 10
///
/// [[providers]]
/// id = "iaas-a"
/// address = "inproc://iaas-a"
///
/// [[offers]]
/// provider_id = "iaas-a"
/// substrate_type = "dial_in_signaling"
/// price_per_participant_hour = 0.01
/// max_conference_size = 5000
/// ```
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedFile {
    #[serde(default)]
    pub defaults: BTreeMap<String, f64>,
    #[serde(default)]
    pub providers: Vec<ProviderEndpoint>,
    #[serde(default)]
    pub offers: Vec<SubstrateOffer>,
}
