use std::sync::Arc;

use serde_json::{json, Value};

use confpaas_core::deploy::catalogue;
use confpaas_core::handler::{IaasHandler, InProcessTransport};
use confpaas_core::model::SubstrateType;
use confpaas_core::registry::{ProviderEndpoint, Registry};
use confpaas_core::sim::{IaasConfig, PlacementMode, SimIaas};
use confpaas_core::{Orchestrator, OrchestratorConfig};
use confpaas_gateway::{rest, Background, Client, GatewayConfig};

/// Gateway over one in-process provider offering `types`.
fn gateway(types: &[SubstrateType]) -> (Background, Client) {
    let iaas = IaasConfig::new(PlacementMode::Bundle);
    let transport = Arc::new(InProcessTransport::new());
    let (address, _) = transport.add(SimIaas::new("A".into(), iaas.clone()));
    let mut reg = Registry::new();
    reg.register_provider(ProviderEndpoint { id: "A".into(), address }).unwrap();
    for o in catalogue("A", &iaas).into_iter().filter(|o| types.contains(&o.substrate_type)) {
        reg.add_offer(o).unwrap();
    }
    let handler = IaasHandler::new().with_transport(InProcessTransport::SCHEME, transport);
    let o = Arc::new(Orchestrator::new(OrchestratorConfig::default(), reg, handler));
    let server = Background::start("127.0.0.1:0", rest::router(o)).unwrap();
    let client = Client::new(server.url());
    (server, client)
}

fn everything() -> (Background, Client) {
    gateway(&SubstrateType::ALL)
}

fn audio_conf() -> Value {
    json!({"model": "dial_in", "media": ["audio"], "technology": "sip", "audio_encodings": ["G.711"], "subconference_enabled": true})
}

fn create(c: &Client) -> String {
    let r = c.send("POST", "/v1/conferences", &audio_conf()).unwrap();
    assert_eq!(r.status, 201, "{:?}", r.body);
    r.body["id"].as_str().unwrap().to_string()
}

fn join(c: &Client, id: &str, name: &str) -> String {
    let r = c.send("POST", &format!("/v1/conferences/{id}/participants"), &json!({"name": name, "uri": format!("sip:{name}@x")})).unwrap();
    assert_eq!(r.status, 201, "{:?}", r.body);
    r.body["participant"]["id"].as_str().unwrap().to_string()
}

#[test]
fn create_returns_location_and_record() {
    let (_s, c) = everything();
    let r = c.send("POST", "/v1/conferences", &audio_conf()).unwrap();
    assert_eq!(r.status, 201);
    let uri = r.body["uri"].as_str().unwrap();
    assert_eq!(r.location.as_deref(), Some(uri));
    assert!(uri.starts_with("/v1/conferences/"));
    let got = c.get(uri).unwrap();
    assert_eq!(got.status, 200);
    assert_eq!(got.body["state"], "running");
    assert_eq!(got.body["spec"]["signaling_protocol"], "SIP");
    assert!(got.body["bindings"]["audio_mixer"].is_object());
}

#[test]
fn create_errors() {
    let (_s, c) = everything();
    let r = c.send("POST", "/v1/conferences", &json!({"model": "dial_in", "technology": "sip"})).unwrap();
    assert_eq!((r.status, r.code()), (400, Some("MissingMedia")));
    let mut body = audio_conf();
    body["bitrate"] = json!(64);
    let r = c.send("POST", "/v1/conferences", &body).unwrap();
    assert_eq!((r.status, r.code()), (400, Some("UnknownParameter")));

    let (_s, empty) = gateway(&[]);
    let r = empty.send("POST", "/v1/conferences", &audio_conf()).unwrap();
    assert_eq!((r.status, r.code()), (503, Some("NoCapableIaaS")));
}

#[test]
fn participants() {
    let (_s, c) = everything();
    let id = create(&c);
    let r = c.send("POST", "/v1/conferences/nope/participants", &json!({"name": "a", "uri": "sip:a@x"})).unwrap();
    assert_eq!((r.status, r.code()), (404, Some("ConferenceNotFound")));
    let r = c.send("POST", &format!("/v1/conferences/{id}/participants"), &json!({"name": "a", "uri": "nouri"})).unwrap();
    assert_eq!((r.status, r.code()), (400, Some("InvalidParticipant")));
    let pid = join(&c, &id, "alice");
    let r = c.delete(&format!("/v1/conferences/{id}/participants/{pid}")).unwrap();
    assert_eq!(r.status, 200);
    let r = c.delete(&format!("/v1/conferences/{id}/participants/{pid}")).unwrap();
    assert_eq!((r.status, r.code()), (404, Some("ParticipantNotFound")));

    // terminated conferences refuse joins
    let r = c.get("/v1/conferences").unwrap();
    assert_eq!(r.body.as_array().unwrap().len(), 1);
}

#[test]
fn terminate_then_gone() {
    let (_s, c) = everything();
    let id = create(&c);
    let r = c.delete(&format!("/v1/conferences/{id}")).unwrap();
    assert_eq!((r.status, r.body["status"].as_str()), (200, Some("terminated")));
    assert_eq!(c.get(&format!("/v1/conferences/{id}")).unwrap().status, 404);
    assert_eq!(c.delete(&format!("/v1/conferences/{id}")).unwrap().status, 404);
    let r = c.send("POST", &format!("/v1/conferences/{id}/participants"), &json!({"name": "a", "uri": "sip:a@x"})).unwrap();
    assert_eq!((r.status, r.code()), (409, Some("ConferenceNotRunning")));
}

#[test]
fn floors() {
    let (_s, c) = everything();
    let id = create(&c);
    let r = c.send("POST", &format!("/v1/conferences/{id}/floors"), &json!({"chair": "p99"})).unwrap();
    assert_eq!((r.status, r.code()), (400, Some("UnknownParticipant")));
    let pid = join(&c, &id, "chair");
    let r = c.send("POST", &format!("/v1/conferences/{id}/floors"), &json!({"chair": pid})).unwrap();
    assert_eq!(r.status, 201, "{:?}", r.body);
    assert!(r.location.is_some());
    let rec = c.get(&format!("/v1/conferences/{id}")).unwrap();
    assert!(rec.body["bindings"]["floor_control"].is_object());

    let (_s, no_floor) = gateway(&[SubstrateType::DialInSignaling, SubstrateType::AudioMixer]);
    let id = create(&no_floor);
    let pid = join(&no_floor, &id, "chair");
    let r = no_floor.send("POST", &format!("/v1/conferences/{id}/floors"), &json!({"chair": pid})).unwrap();
    assert_eq!((r.status, r.code()), (409, Some("FloorControlUnavailable")));
}

#[test]
fn subconferences() {
    let (_s, c) = everything();
    let id = create(&c);
    let a = join(&c, &id, "a");
    let r = c.send("POST", &format!("/v1/conferences/{id}/subconferences"), &json!({"members": [a]})).unwrap();
    assert_eq!(r.status, 201, "{:?}", r.body);
    let sid = r.body["id"].as_str().unwrap();
    let path = format!("/v1/conferences/{id}/subconferences/{sid}");
    let r = c.delete(&path).unwrap();
    assert_eq!((r.status, r.body["status"].as_str()), (200, Some("removed")));
    let r = c.delete(&path).unwrap();
    assert_eq!((r.status, r.code()), (404, Some("SubconferenceNotFound")));
    let r = c.delete(&format!("/v1/conferences/{id}/subconferences/nope")).unwrap();
    assert_eq!(r.status, 404);
}

#[test]
fn patch_rules() {
    let (_s, c) = everything();
    let id = create(&c);
    let path = format!("/v1/conferences/{id}");
    let r = c.send("PATCH", &path, &json!({"model": "ad_hoc"})).unwrap();
    assert_eq!((r.status, r.code()), (400, Some("NotRuntimeMutable")));
    let r = c.send("PATCH", &path, &json!({"colour": "red"})).unwrap();
    assert_eq!((r.status, r.code()), (400, Some("UnknownParameter")));
    let r = c.send("PATCH", &path, &json!({"add_media": "text", "duration_s": 300})).unwrap();
    assert_eq!(r.status, 200, "{:?}", r.body);
    assert!(r.body["bindings"]["instant_messaging"].is_object());
    assert_eq!(r.body["timed_media"][0]["expires_at_ms"], 300_000);

    let r = c.send("POST", "/v1/admin/clock", &json!({"advance_ms": 300_000})).unwrap();
    assert_eq!(r.body["now_ms"], 300_000);
    let r = c.get(&path).unwrap();
    assert!(r.body["bindings"].get("instant_messaging").is_none());
    let r = c.send("PATCH", &path, &json!({"remove_media": "audio"})).unwrap();
    assert_eq!((r.status, r.code()), (400, Some("InvalidModification")));
    let r = c.send("POST", "/v1/admin/clock", &json!({"to_ms": 5})).unwrap();
    assert_eq!((r.status, r.code()), (400, Some("InvalidClockMove")));
}

#[test]
fn offers_admin() {
    let (_s, c) = everything();
    let before = c.get("/v1/admin/offers").unwrap().body.as_array().unwrap().len();
    let offer = json!({"provider_id": "A", "substrate_type": "video_mixer", "price_per_participant_hour": 0.02, "max_conference_size": 100});
    let r = c.send("POST", "/v1/admin/offers", &offer).unwrap();
    assert_eq!(r.status, 201, "{:?}", r.body);
    let oid = r.body["offer_id"].as_u64().unwrap();
    assert_eq!(c.get("/v1/admin/offers").unwrap().body.as_array().unwrap().len(), before + 1);
    let r = c.send("PATCH", &format!("/v1/admin/offers/{oid}"), &json!({"price_per_participant_hour": 0.5})).unwrap();
    assert_eq!(r.body["price_per_participant_hour"], 0.5);
    assert_eq!(c.delete(&format!("/v1/admin/offers/{oid}")).unwrap().status, 200);
    assert_eq!(c.delete(&format!("/v1/admin/offers/{oid}")).unwrap().status, 404);
    assert_eq!(c.delete("/v1/admin/offers/abc").unwrap().status, 404);

    let mut unknown = offer.clone();
    unknown["provider_id"] = json!("Z");
    let r = c.send("POST", "/v1/admin/offers", &unknown).unwrap();
    assert_eq!((r.status, r.code()), (400, Some("UnknownProvider")));
    let mut negative = offer;
    negative["price_per_participant_hour"] = json!(-1.0);
    assert_eq!(c.send("POST", "/v1/admin/offers", &negative).unwrap().code(), Some("InvalidOffer"));
}

#[test]
fn singular_path_redirects() {
    let (_s, c) = everything();
    let id = create(&c);
    let r = c.send("POST", &format!("/v1/conference/{id}/participants"), &json!({"name": "a", "uri": "sip:a@x"})).unwrap();
    assert_eq!(r.status, 301);
    assert_eq!(r.location, Some(format!("/v1/conferences/{id}/participants")));
}

#[test]
fn malformed_json_everywhere() {
    let (_s, c) = everything();
    let id = create(&c);
    let pid = join(&c, &id, "a");
    let posts = [
        ("POST", "/v1/conferences".to_string()),
        ("POST", format!("/v1/conferences/{id}/participants")),
        ("POST", format!("/v1/conferences/{id}/floors")),
        ("POST", format!("/v1/conferences/{id}/subconferences")),
        ("PATCH", format!("/v1/conferences/{id}")),
        ("POST", "/v1/admin/offers".to_string()),
        ("PATCH", "/v1/admin/offers/1".to_string()),
        ("POST", "/v1/admin/providers".to_string()),
        ("POST", "/v1/admin/clock".to_string()),
    ];
    for body in ["{", "[]", "\"x\"", "{\"a\":", "null", "\u{0}"] {
        for (m, path) in &posts {
            let r = c.raw(m, path, body).unwrap();
            assert!((400..600).contains(&r.status), "{m} {path} {body:?} -> {}", r.status);
            assert!(r.code().is_some(), "{m} {path} {body:?} -> {:?}", r.body);
        }
    }
    // still serving afterwards
    assert_eq!(c.get(&format!("/v1/conferences/{id}")).unwrap().body["participants"][&pid]["id"], json!(pid));
}

#[test]
fn unknown_routes_and_methods() {
    let (_s, c) = everything();
    let r = c.get("/v2/anything").unwrap();
    assert_eq!((r.status, r.code()), (404, Some("NoSuchRoute")));
    let r = c.raw("PUT", "/v1/conferences", "{}").unwrap();
    assert_eq!((r.status, r.code()), (405, Some("MethodNotAllowed")));
}

#[test]
fn listen_address_from_config_and_env() {
    let dir = std::env::temp_dir().join(format!("confpaas-gw-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("gateway.toml");
    std::fs::write(&path, "listen = \"127.0.0.1:7001\"\n").unwrap();
    // the only test touching the variable
    std::env::remove_var(confpaas_gateway::config::LISTEN_ENV);
    assert_eq!(GatewayConfig::load(&path).unwrap().listen, "127.0.0.1:7001");
    std::env::set_var(confpaas_gateway::config::LISTEN_ENV, "127.0.0.1:7002");
    assert_eq!(GatewayConfig::load(&path).unwrap().listen, "127.0.0.1:7002");
    std::env::remove_var(confpaas_gateway::config::LISTEN_ENV);
    std::fs::remove_dir_all(dir).unwrap();
}
