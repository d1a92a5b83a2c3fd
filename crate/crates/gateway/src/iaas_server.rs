//! HTTP face of a simulated IaaS provider.

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::Router;

use confpaas_core::sim::SimIaas;

pub type SharedSim = Arc<Mutex<SimIaas>>;

/// `POST /iaas` takes one encoded request and answers with one encoded
/// response. `GET /introspect` returns the provider's snapshot.
pub fn router(sim: SharedSim) -> Router {
    Router::new().route("/iaas", post(exchange)).route("/introspect", get(introspect)).with_state(sim)
}

fn json(body: String) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/json")], body)
}

async fn exchange(State(sim): State<SharedSim>, body: String) -> impl IntoResponse {
    // garbage in still yields a protocol-level error response
    json(sim.lock().unwrap().handle_json(&body))
}

async fn introspect(State(sim): State<SharedSim>) -> impl IntoResponse {
    json(sim.lock().unwrap().snapshot_json())
}
