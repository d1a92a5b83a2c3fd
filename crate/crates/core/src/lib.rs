//! Conferencing platform-as-a-service core.
//!
//! Conferences are described declaratively ([`model`]), composed from
//! substrates offered by IaaS providers ([`registry`]), and run by the
//! [`orchestrator`], which talks to providers through the southbound
//! [`handler`] using the JSON [`wire`] protocol. [`sim`] implements a
//! simulated provider and [`bench`] the allocation and latency experiments.

pub mod bench;
pub mod clock;
pub mod deploy;
pub mod events;
pub mod handler;
pub mod model;
pub mod orchestrator;
pub mod registry;
pub mod sim;
pub mod testkit;
pub mod wire;

pub use clock::VirtualClock;
pub use deploy::Deployment;
pub use orchestrator::{Modification, Orchestrator, OrchestratorConfig, OrchestratorError};
