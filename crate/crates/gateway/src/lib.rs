//! HTTP surfaces of the conferencing platform: the northbound REST API, the
//! HTTP endpoint of simulated IaaS providers, and the HTTP transport the
//! orchestrator uses to reach them.

pub mod client;
pub mod config;
pub mod error;
pub mod http_transport;
pub mod iaas_server;
pub mod rest;
pub mod server;

pub use client::{Client, Reply};
pub use config::{GatewayConfig, IaasServerConfig};
pub use error::{ApiError, ErrorBody};
pub use http_transport::HttpTransport;
pub use server::Background;
