//! Simulated conferencing IaaS: substrate lifecycle, VM resource packing and
//! operation latencies on a virtual clock.

mod iaas;
mod params;

pub use iaas::{
    HostedSnapshot, IaasSnapshot, InstanceSnapshot, SimError, SimFaults, SimIaas, SubConferenceSnapshot, VmSnapshot,
};
pub use params::{alloc, Allocation, IaasConfig, LatencyModel, PlacementMode, ResourceModel};
