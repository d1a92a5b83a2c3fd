//! Northbound REST API. Handlers hold no state of their own; everything
//! lives in the shared [`Orchestrator`].

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use confpaas_core::model::{
    runtime_mutable, ConferenceId, ConferenceRecord, ConferenceState, FloorDescriptor, FloorPolicy, Media,
    ParticipantDescriptor, ParticipantId, RawConferenceSpec, SubconferenceId,
};
use confpaas_core::registry::{OfferId, OfferUpdate, ProviderEndpoint, SubstrateOffer};
use confpaas_core::{Modification, Orchestrator, OrchestratorError};

use crate::error::ApiError;

pub const PREFIX: &str = "/v1";

type Shared = Arc<Orchestrator>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(orchestrator: Arc<Orchestrator>) -> Router {
    let api = Router::new()
        .route("/conferences", post(create_conference).get(list_conferences))
        .route("/conferences/{id}", get(get_conference).patch(modify_conference).delete(terminate_conference))
        .route("/conferences/{id}/participants", post(add_participant))
        .route("/conferences/{id}/participants/{pid}", delete(remove_participant))
        .route("/conferences/{id}/floors", post(add_floor))
        .route("/conferences/{id}/subconferences", post(create_subconference))
        .route("/conferences/{id}/subconferences/{sid}", delete(remove_subconference))
        .route("/conference", axum::routing::any(singular))
        .route("/conference/{*rest}", axum::routing::any(singular))
        .route("/admin/offers", get(list_offers).post(add_offer))
        .route("/admin/offers/{oid}", get(get_offer).patch(update_offer).delete(remove_offer))
        .route("/admin/providers", get(list_providers).post(register_provider))
        .route("/admin/clock", get(clock).post(advance_clock))
        .route("/admin/snapshot", get(snapshot))
        .route("/admin/iaas", get(iaas))
        .route("/admin/events", get(events))
        .method_not_allowed_fallback(method_not_allowed);
    Router::new().nest(PREFIX, api).fallback(no_route).with_state(orchestrator)
}

/// Runs a blocking orchestrator call off the async workers; southbound
/// requests may go over HTTP.
async fn blocking<T, F>(o: Shared, f: F) -> ApiResult<T>
where
    F: FnOnce(&Orchestrator) -> Result<T, OrchestratorError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&o))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
        .map_err(ApiError::from)
}

/// Every request body is a JSON object.
fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let v: Value = serde_json::from_slice(body).map_err(ApiError::from_json)?;
    if !v.is_object() {
        return Err(bad("MalformedJson", "expected a JSON object"));
    }
    serde_json::from_value(v).map_err(ApiError::from_json)
}

fn created<T: Serialize>(uri: &str, body: T) -> Response {
    (StatusCode::CREATED, [(header::LOCATION, uri.to_string())], Json(body)).into_response()
}

async fn no_route(uri: Uri) -> ApiError {
    ApiError::not_found("NoSuchRoute", format!("no resource at {}", uri.path()))
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "MethodNotAllowed", "method not allowed on this resource")
}

async fn singular(uri: Uri) -> Response {
    // nested routers see the path without the prefix
    let rest = uri.path().trim_start_matches(PREFIX).trim_start_matches("/conference");
    let path = format!("{PREFIX}/conferences{rest}");
    let target = match uri.query() {
        Some(q) => format!("{path}?{q}"),
        None => path,
    };
    (StatusCode::MOVED_PERMANENTLY, [(header::LOCATION, target)]).into_response()
}

// ---- conferences ----

#[derive(Serialize)]
struct CreatedConference {
    id: ConferenceId,
    uri: String,
    start_latency_ms: u64,
}

async fn create_conference(State(o): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let raw: RawConferenceSpec = parse(&body)?;
    let rec = blocking(o, move |o| o.create_conference(&raw)).await?;
    Ok(created(&rec.uri, CreatedConference { id: rec.id.clone(), uri: rec.uri.clone(), start_latency_ms: rec.start_latency_ms }))
}

async fn list_conferences(State(o): State<Shared>) -> Json<Vec<ConferenceRecord>> {
    Json(o.conferences().into_iter().filter(|c| c.state != ConferenceState::Terminated).collect())
}

/// A terminated conference is kept for the log but no longer addressable.
fn live(o: &Orchestrator, id: &ConferenceId) -> Result<ConferenceRecord, OrchestratorError> {
    match o.conference(id) {
        Some(rec) if rec.state != ConferenceState::Terminated => Ok(rec),
        _ => Err(OrchestratorError::ConferenceNotFound(id.clone())),
    }
}

async fn get_conference(State(o): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<ConferenceRecord>> {
    Ok(Json(live(&o, &id.into())?))
}

async fn terminate_conference(State(o): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let id = ConferenceId(id);
    blocking(o, move |o| {
        live(o, &id)?;
        o.terminate_conference(&id)
    })
    .await?;
    Ok(Json(json!({ "status": "terminated" })))
}

/// Turns a PATCH document into one modification. Exactly one change key is
/// allowed, plus `duration_s` next to `add_media`.
pub fn parse_patch(body: &Bytes) -> ApiResult<(Modification, Option<u64>)> {
    let mut doc: Map<String, Value> = parse(body)?;
    let duration_s = match doc.remove("duration_s") {
        None | Some(Value::Null) => None,
        Some(v) => Some(field::<u64>("duration_s", v)?),
    };
    let mut entries = doc.into_iter();
    let (key, value) = match (entries.next(), entries.next()) {
        (Some(kv), None) => kv,
        (None, _) => return Err(bad("InvalidModification", "the patch names no change")),
        (Some(_), Some(_)) => return Err(bad("InvalidModification", "one change per patch")),
    };
    let change = match key.as_str() {
        "add_media" => Modification::AddMedia(field::<Media>(&key, value)?),
        "remove_media" => Modification::RemoveMedia(field::<Media>(&key, value)?),
        "floor_control" => Modification::SetFloorControl(field::<Option<BTreeSet<FloorPolicy>>>(&key, value)?),
        "subconference_enabled" => Modification::SetSubconferenceEnabled(field::<bool>(&key, value)?),
        "conference_size" => Modification::SetConferenceSize(field::<u32>(&key, value)?),
        // the whole media set is replaced through add_media/remove_media
        "media" => return Err(bad("InvalidModification", "use add_media or remove_media")),
        other => match runtime_mutable(other) {
            Ok(_) => Modification::Other(other.to_string()),
            Err(_) => return Err(bad("UnknownParameter", format!("unknown parameter `{other}`"))),
        },
    };
    Ok((change, duration_s))
}

fn field<T: DeserializeOwned>(key: &str, v: Value) -> ApiResult<T> {
    serde_json::from_value(v).map_err(|e| bad("MalformedJson", format!("`{key}`: {e}")))
}

fn bad(code: &str, msg: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, code, msg)
}

async fn modify_conference(
    State(o): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<ConferenceRecord>> {
    let (change, duration_s) = parse_patch(&body)?;
    let id = ConferenceId(id);
    let rec = blocking(o, move |o| {
        live(o, &id)?;
        o.modify_conference(&id, change, duration_s)
    })
    .await?;
    Ok(Json(rec))
}

// ---- participants, floors, subconferences ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewParticipant {
    name: String,
    uri: String,
}

async fn add_participant(State(o): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let p: NewParticipant = parse(&body)?;
    let id = ConferenceId(id);
    let out = blocking(o, move |o| o.add_participant(&id, ParticipantDescriptor::new(p.name, p.uri))).await?;
    Ok(created(&out.participant.uri.clone(), out))
}

async fn remove_participant(
    State(o): State<Shared>,
    Path((id, pid)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    let latency_ms = blocking(o, move |o| o.remove_participant(&id.into(), &ParticipantId(pid))).await?;
    Ok(Json(json!({ "status": "removed", "latency_ms": latency_ms })))
}

async fn add_floor(State(o): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let desc: FloorDescriptor = parse(&body)?;
    let floor = blocking(o, move |o| o.add_floor(&id.into(), desc)).await?;
    Ok(created(&floor.uri.clone(), floor))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSubconference {
    #[serde(default)]
    members: BTreeSet<ParticipantId>,
}

async fn create_subconference(State(o): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: NewSubconference = parse(&body)?;
    let sub = blocking(o, move |o| o.create_subconference(&id.into(), req.members)).await?;
    Ok(created(&sub.uri.clone(), sub))
}

async fn remove_subconference(
    State(o): State<Shared>,
    Path((id, sid)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    blocking(o, move |o| o.remove_subconference(&id.into(), &SubconferenceId(sid))).await?;
    Ok(Json(json!({ "status": "removed" })))
}

// ---- administration ----

fn offer_id(raw: &str) -> ApiResult<OfferId> {
    raw.parse().map(OfferId).map_err(|_| ApiError::not_found("OfferNotFound", format!("offer {raw} not found")))
}

async fn list_offers(State(o): State<Shared>) -> Json<Vec<SubstrateOffer>> {
    Json(o.offers())
}

async fn add_offer(State(o): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let offer: SubstrateOffer = parse(&body)?;
    let stored = o.add_offer(offer)?;
    Ok(created(&format!("{PREFIX}/admin/offers/{}", stored.offer_id.0), stored))
}

async fn get_offer(State(o): State<Shared>, Path(oid): Path<String>) -> ApiResult<Json<SubstrateOffer>> {
    let id = offer_id(&oid)?;
    o.offer(id).map(Json).ok_or_else(|| ApiError::not_found("OfferNotFound", format!("offer {oid} not found")))
}

async fn update_offer(State(o): State<Shared>, Path(oid): Path<String>, body: Bytes) -> ApiResult<Json<SubstrateOffer>> {
    let id = offer_id(&oid)?;
    let update: OfferUpdate = parse(&body)?;
    Ok(Json(o.update_offer(id, update)?))
}

async fn remove_offer(State(o): State<Shared>, Path(oid): Path<String>) -> ApiResult<Json<SubstrateOffer>> {
    Ok(Json(o.remove_offer(offer_id(&oid)?)?))
}

async fn list_providers(State(o): State<Shared>) -> Json<Vec<ProviderEndpoint>> {
    Json(o.providers())
}

async fn register_provider(State(o): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let endpoint: ProviderEndpoint = parse(&body)?;
    o.register_provider(endpoint.clone())?;
    Ok((StatusCode::CREATED, Json(endpoint)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClockMove {
    #[serde(default)]
    advance_ms: Option<u64>,
    #[serde(default)]
    to_ms: Option<u64>,
}

async fn clock(State(o): State<Shared>) -> Json<Value> {
    Json(json!({ "now_ms": o.now_ms() }))
}

/// Moves virtual time forward, firing scaling ticks and media expiries.
async fn advance_clock(State(o): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let mv: ClockMove = parse(&body)?;
    let now = o.now_ms();
    let target = match (mv.advance_ms, mv.to_ms) {
        (Some(d), None) => now.saturating_add(d),
        (None, Some(t)) if t >= now => t,
        (None, Some(t)) => return Err(bad("InvalidClockMove", format!("clock is at {now} ms, cannot go back to {t}"))),
        _ => return Err(bad("InvalidClockMove", "give exactly one of advance_ms and to_ms")),
    };
    let now_ms = blocking(o, move |o| {
        o.advance_to(target);
        Ok(o.now_ms())
    })
    .await?;
    Ok(Json(json!({ "now_ms": now_ms })))
}

async fn snapshot(State(o): State<Shared>) -> Response {
    Json(o.snapshot()).into_response()
}

async fn iaas(State(o): State<Shared>) -> ApiResult<Response> {
    let snaps = blocking(o, |o| Ok(o.iaas_snapshots())).await?;
    Ok(Json(snaps).into_response())
}

async fn events(State(o): State<Shared>) -> Response {
    Json(o.log().events()).into_response()
}
