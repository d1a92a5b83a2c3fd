use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::SubstrateType;

/// Slack for float comparisons on RAM and VM fractions.
pub(crate) const EPS: f64 = 1e-9;

/// How an IaaS places substrate instances on VMs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMode {
    /// All substrates of a conference share bundle VMs (single provider).
    Bundle,
    /// Every substrate instance gets dedicated VMs.
    PerSubstrate,
    /// Substrates are bound to a pool of VMs booted up front.
    Prealloc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourceModel {
    pub ram_total_mb: f64,
    pub vcpus: u32,
    pub os_overhead_mb: f64,
    /// RAM per participant, MB.
    pub footprint_mb: BTreeMap<SubstrateType, f64>,
    /// vCPU per participant. When absent, vCPUs are tracked but never bind.
    pub vcpu_footprint: Option<BTreeMap<SubstrateType, f64>>,
    /// Ceiling on booted VMs per provider.
    pub max_vms: u32,
}

impl Default for ResourceModel {
    fn default() -> Self {
        use SubstrateType::*;
        ResourceModel {
            ram_total_mb: 4096.0,
            vcpus: 2,
            os_overhead_mb: 512.0,
            footprint_mb: BTreeMap::from([
                (DialInSignaling, 1.0),
                (DialOutSignaling, 1.0),
                (AudioMixer, 5.0),
                (VideoMixer, 20.0),
                (InstantMessaging, 0.5),
                (FloorControl, 0.2),
            ]),
            vcpu_footprint: None,
            max_vms: 256,
        }
    }
}

impl ResourceModel {
    pub fn usable_mb(&self) -> f64 {
        self.ram_total_mb - self.os_overhead_mb
    }

    pub fn footprint(&self, t: SubstrateType) -> f64 {
        self.footprint_mb.get(&t).copied().unwrap_or(1.0)
    }

    fn vcpu(&self, t: SubstrateType) -> Option<f64> {
        self.vcpu_footprint.as_ref().and_then(|m| m.get(&t).copied())
    }

    /// Fraction of one VM a single participant of `t` consumes on a dedicated VM.
    pub fn vm_fraction(&self, t: SubstrateType) -> f64 {
        let ram = self.footprint(t) / self.usable_mb();
        match self.vcpu(t) {
            Some(v) => ram.max(v / self.vcpus as f64),
            None => ram,
        }
    }

    /// Participants of every type one bundle VM carries when its usable
    /// resources are split equally among `types`.
    pub fn bundle_capacity(&self, types: &BTreeSet<SubstrateType>) -> u32 {
        if types.is_empty() {
            return 0;
        }
        let n = types.len() as f64;
        let ram_share = self.usable_mb() / n;
        let cpu_share = self.vcpus as f64 / n;
        types
            .iter()
            .map(|&t| {
                let by_ram = (ram_share / self.footprint(t) + EPS).floor();
                let by_cpu = self.vcpu(t).map_or(f64::INFINITY, |v| (cpu_share / v + EPS).floor());
                by_ram.min(by_cpu)
            })
            .fold(f64::INFINITY, f64::min)
            .clamp(0.0, u32::MAX as f64) as u32
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.ram_total_mb > self.os_overhead_mb) || self.os_overhead_mb < 0.0 {
            return Err("ram_total_mb must exceed os_overhead_mb >= 0".into());
        }
        if self.vcpus < 1 {
            return Err("vcpus must be >= 1".into());
        }
        if let Some((t, _)) = self.footprint_mb.iter().find(|(_, f)| !(**f > 0.0)) {
            return Err(format!("footprint of {t} must be > 0"));
        }
        if let Some(m) = &self.vcpu_footprint {
            if let Some((t, _)) = m.iter().find(|(_, f)| !(**f > 0.0)) {
                return Err(format!("vcpu footprint of {t} must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub vm_boot_ms: u64,
    pub substrate_init_ms: u64,
    pub intra_vm_connect_ms: u64,
    pub inter_iaas_connect_ms: u64,
    pub notify_paas_ms: u64,
    pub local_op_ms: u64,
    /// Uniform extra latency in `[0, jitter_ms]` on every operation.
    pub jitter_ms: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            vm_boot_ms: 3000,
            substrate_init_ms: 500,
            intra_vm_connect_ms: 5,
            inter_iaas_connect_ms: 120,
            notify_paas_ms: 40,
            local_op_ms: 10,
            jitter_ms: 0,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.inter_iaas_connect_ms <= self.intra_vm_connect_ms {
            return Err("inter_iaas_connect_ms must exceed intra_vm_connect_ms".into());
        }
        Ok(())
    }
}

/// Configuration of one simulated IaaS provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IaasConfig {
    pub placement: PlacementMode,
    #[serde(default)]
    pub resources: ResourceModel,
    #[serde(default)]
    pub latency: LatencyModel,
    /// Size of the pre-booted pool in prealloc placement.
    #[serde(default)]
    pub prealloc_vms: u32,
    #[serde(default)]
    pub seed: u64,
}

impl IaasConfig {
    pub fn new(placement: PlacementMode) -> Self {
        IaasConfig {
            placement,
            resources: ResourceModel::default(),
            latency: LatencyModel::default(),
            prealloc_vms: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub vms: u32,
    pub ram_mb: f64,
}

/// Smallest VM count carrying a load measured in VM fractions.
pub(crate) fn vms_for_load(load: f64) -> u32 {
    (load - EPS).ceil().max(0.0) as u32
}

/// RAM and VM count allocated to a conference of `n` participants using
/// `types`, under `mode`.
///
/// Bundle and prealloc: `C = min_t floor((usable/|types|)/f(t))` participants
/// per VM and `ceil(n/C)` VMs. Per-substrate: `sum_t ceil(n*f(t)/usable)`.
/// Returns `None` when one participant does not fit a VM.
pub fn alloc(model: &ResourceModel, mode: PlacementMode, n: u32, types: &BTreeSet<SubstrateType>) -> Option<Allocation> {
    let vms = match mode {
        PlacementMode::Bundle | PlacementMode::Prealloc => {
            let c = model.bundle_capacity(types);
            if c == 0 {
                return None;
            }
            n.div_ceil(c)
        }
        PlacementMode::PerSubstrate => {
            if types.iter().any(|&t| model.vm_fraction(t) > 1.0 + EPS) {
                return None;
            }
            types.iter().map(|&t| vms_for_load(n as f64 * model.vm_fraction(t))).sum()
        }
    };
    Some(Allocation { vms, ram_mb: vms as f64 * model.ram_total_mb })
}
