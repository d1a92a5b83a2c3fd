use std::sync::{Arc, Mutex};

use serde_json::json;

use confpaas_core::deploy::catalogue;
use confpaas_core::model::SubstrateType;
use confpaas_core::registry::{ProviderEndpoint, SeedFile};
use confpaas_core::sim::{IaasConfig, PlacementMode, SimIaas};
use confpaas_gateway::{iaas_server, rest, Background, Client, GatewayConfig};

fn iaas(id: &str, cfg: &IaasConfig) -> Background {
    let sim = Arc::new(Mutex::new(SimIaas::new(id.into(), cfg.clone())));
    Background::start("127.0.0.1:0", iaas_server::router(sim)).unwrap()
}

/// Signaling on `a`, everything else on `b`.
fn split_gateway(a: &str, b: &str) -> (Background, Client) {
    let cfg = IaasConfig::new(PlacementMode::PerSubstrate);
    let mut seed = SeedFile::default();
    for (id, url) in [("iaas-a", a), ("iaas-b", b)] {
        seed.providers.push(ProviderEndpoint { id: id.into(), address: url.to_string() });
        seed.offers.extend(
            catalogue(id, &cfg).into_iter().filter(|o| o.substrate_type.is_signaling() == (id == "iaas-a")),
        );
    }
    let gw = GatewayConfig { registry: seed, ..Default::default() };
    let server = Background::start("127.0.0.1:0", rest::router(gw.build().unwrap())).unwrap();
    let client = Client::new(server.url());
    (server, client)
}

#[test]
fn conference_spans_two_http_providers() {
    let cfg = IaasConfig::new(PlacementMode::PerSubstrate);
    let (a, b) = (iaas("iaas-a", &cfg), iaas("iaas-b", &cfg));
    let (_gw, c) = split_gateway(&a.url(), &b.url());
    let conf = json!({"model": "dial_in", "media": ["audio"], "technology": "sip", "audio_encodings": ["G.711"]});
    let r = c.send("POST", "/v1/conferences", &conf).unwrap();
    assert_eq!(r.status, 201, "{:?}", r.body);
    let uri = r.body["uri"].as_str().unwrap().to_string();
    for i in 0..3 {
        let r = c.send("POST", &format!("{uri}/participants"), &json!({"name": i.to_string(), "uri": format!("sip:{i}@x")})).unwrap();
        assert_eq!(r.status, 201);
    }
    let rec = c.get(&uri).unwrap().body;
    assert_eq!(rec["bindings"]["dial_in_signaling"]["provider_id"], "iaas-a");
    assert_eq!(rec["bindings"]["audio_mixer"]["provider_id"], "iaas-b");

    let snaps = c.get("/v1/admin/iaas").unwrap().body;
    let snaps = snaps.as_array().unwrap();
    assert_eq!(snaps.len(), 2);
    for s in snaps {
        assert_eq!(s["instances"][0]["participants"], 3);
    }

    // the IaaS endpoint answers introspection directly as well
    let direct = Client::new(b.url()).get("/introspect").unwrap();
    assert_eq!(direct.status, 200);
    assert_eq!(direct.body["provider_id"], "iaas-b");

    assert_eq!(c.delete(&uri).unwrap().status, 200);
    let snaps = c.get("/v1/admin/iaas").unwrap().body;
    assert!(snaps.as_array().unwrap().iter().all(|s| s["instances"].as_array().unwrap().is_empty()));
    let t = SubstrateType::AudioMixer.to_string();
    let events = c.get("/v1/admin/events").unwrap().body;
    assert!(events.as_array().unwrap().iter().any(|e| e["kind"] == "substrate_released" && e["substrate_type"] == t));
}

#[test]
fn unreachable_provider_is_503() {
    let cfg = IaasConfig::new(PlacementMode::PerSubstrate);
    let a = iaas("iaas-a", &cfg);
    let closed = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", l.local_addr().unwrap())
    };
    let (_gw, c) = split_gateway(&a.url(), &closed);
    let conf = json!({"model": "dial_in", "media": ["audio"], "technology": "sip", "audio_encodings": ["G.711"]});
    let r = c.send("POST", "/v1/conferences", &conf).unwrap();
    assert_eq!((r.status, r.code()), (503, Some("IaaSUnreachable")), "{:?}", r.body);
    // nothing left behind on the reachable side
    let snap = Client::new(a.url()).get("/introspect").unwrap().body;
    assert!(snap["instances"].as_array().unwrap().is_empty());
}

#[test]
fn iaas_endpoint_survives_garbage() {
    let cfg = IaasConfig::new(PlacementMode::Bundle);
    let a = iaas("iaas-a", &cfg);
    let c = Client::new(a.url());
    for body in ["", "{", "[]", "{\"proto_version\":99}"] {
        let r = c.raw("POST", "/iaas", body).unwrap();
        assert_eq!(r.status, 200);
        assert_eq!(r.body["status"], "error", "{body:?} -> {:?}", r.body);
    }
}
