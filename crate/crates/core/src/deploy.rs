//! In-process deployments: simulated IaaS providers, a registry describing
//! their offers, and an orchestrator wired to them.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use crate::handler::{IaasHandler, InProcessTransport};
use crate::model::{ProviderId, SubstrateType};
use crate::orchestrator::{Orchestrator, OrchestratorConfig, OrchestratorError};
use crate::registry::{ProviderEndpoint, Registry, SubstrateOffer, ACTIVATION_LATENCY_KEY};
use crate::sim::{IaasConfig, PlacementMode, SimIaas};

/// Largest conference a catalogue offer accepts.
pub const CATALOGUE_MAX_SIZE: u32 = 100_000;

/// Per participant-hour list prices of the standard catalogue.
pub fn list_price(t: SubstrateType) -> f64 {
    match t {
        SubstrateType::DialInSignaling | SubstrateType::DialOutSignaling => 0.001,
        SubstrateType::AudioMixer => 0.002,
        SubstrateType::VideoMixer => 0.01,
        SubstrateType::InstantMessaging | SubstrateType::FloorControl => 0.0005,
    }
}

/// One offer per substrate type from `provider`, advertising the activation
/// latency its simulator will exhibit.
pub fn catalogue(provider: &str, iaas: &IaasConfig) -> Vec<SubstrateOffer> {
    let lat = &iaas.latency;
    let activation = match iaas.placement {
        PlacementMode::Prealloc => lat.substrate_init_ms,
        _ => lat.vm_boot_ms + lat.substrate_init_ms,
    };
    SubstrateType::ALL
        .into_iter()
        .map(|t| {
            SubstrateOffer::new(provider, t, list_price(t), CATALOGUE_MAX_SIZE)
                .with_qos(ACTIVATION_LATENCY_KEY, activation as f64)
        })
        .collect()
}

pub struct Deployment {
    pub orchestrator: Arc<Orchestrator>,
    pub transport: Arc<InProcessTransport>,
    sims: BTreeMap<ProviderId, Arc<Mutex<SimIaas>>>,
}

impl Deployment {
    /// Starts one simulator per provider and an orchestrator whose registry
    /// holds `offers`.
    pub fn new(
        config: OrchestratorConfig,
        providers: Vec<(ProviderId, IaasConfig)>,
        offers: Vec<SubstrateOffer>,
    ) -> Result<Self, OrchestratorError> {
        Self::with_registry(config, providers, Registry::new(), offers)
    }

    /// Like [`Deployment::new`], keeping the default QoS of `base`.
    pub fn with_registry(
        config: OrchestratorConfig,
        providers: Vec<(ProviderId, IaasConfig)>,
        mut base: Registry,
        offers: Vec<SubstrateOffer>,
    ) -> Result<Self, OrchestratorError> {
        let transport = Arc::new(InProcessTransport::new());
        let mut sims = BTreeMap::new();
        for (id, iaas) in providers {
            let (address, sim) = transport.add(SimIaas::new(id.clone(), iaas));
            base.register_provider(ProviderEndpoint { id: id.clone(), address })?;
            sims.insert(id, sim);
        }
        for o in offers {
            base.add_offer(o)?;
        }
        let handler = IaasHandler::new().with_transport(InProcessTransport::SCHEME, transport.clone());
        let orchestrator = Arc::new(Orchestrator::new(config, base, handler));
        Ok(Deployment { orchestrator, transport, sims })
    }

    /// A single provider offering the whole catalogue.
    pub fn single_provider(config: OrchestratorConfig, provider: &str, iaas: IaasConfig) -> Self {
        let offers = catalogue(provider, &iaas);
        Self::new(config, vec![(ProviderId(provider.into()), iaas)], offers).expect("catalogue offers are valid")
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orchestrator
    }

    pub fn sim(&self, provider: &str) -> Option<Arc<Mutex<SimIaas>>> {
        self.sims.get(&ProviderId(provider.into())).cloned()
    }

    pub fn sims(&self) -> impl Iterator<Item = (&ProviderId, &Arc<Mutex<SimIaas>>)> {
        self.sims.iter()
    }
}
