//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use confpaas_core::bench::{compare_modes, default_comparison, run_scenario, scaling_fuzz, Mode, ScenarioConfig};
use confpaas_core::deploy::catalogue;
use confpaas_core::model::{validate_spec, ConferenceModel, Media, RawConferenceSpec, SubstrateType, Technology, ValidationError};
use confpaas_core::orchestrator::{determine_substrates, select_offer, SelectionWeights, SubstrateRequirement};
use confpaas_core::registry::{ProviderEndpoint, SeedFile, SubstrateOffer};
use confpaas_core::sim::{alloc, IaasConfig, LatencyModel, PlacementMode, ResourceModel, SimIaas};
use confpaas_core::testkit;
use confpaas_core::wire::{decode_request, decode_response, encode_request, encode_response};
use confpaas_gateway::{iaas_server, rest, Background, Client, GatewayConfig};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, took: Duration) -> Outcome {
    ensure!(took <= limit, "took {:.2} s, limit {:.0} s", took.as_secs_f64(), limit.as_secs_f64());
    Ok(String::new())
}

// ---- 1: description validation ----

fn first_missing(mask: u8) -> ValidationError {
    if mask & 1 != 0 {
        ValidationError::MissingModel
    } else if mask & 2 != 0 {
        ValidationError::MissingMedia
    } else {
        ValidationError::MissingTechnology
    }
}

fn validation() -> Outcome {
    let start = Instant::now();
    let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    let media_sets = proptest::sample::subsequence(Media::ALL.to_vec(), 1..=3);
    let techs = prop_oneof![Just(Technology::Sip), Just(Technology::Webrtc), Just(Technology::Hybrid)];
    let mut rejected = BTreeSet::new();
    let result = runner.run(&(0u8..8, media_sets, techs), |(mask, media, tech)| {
        let media: BTreeSet<Media> = media.into_iter().collect();
        let sip_codecs = tech != Technology::Webrtc;
        let raw = RawConferenceSpec {
            model: (mask & 1 == 0).then_some(ConferenceModel::PreArrangedDialIn),
            media: (mask & 2 == 0).then(|| media.clone()),
            technology: (mask & 4 == 0).then_some(tech),
            signaling_protocol: (tech != Technology::Sip).then(|| "wss".into()),
            audio_encodings: sip_codecs.then(|| vec!["AMR".into()]),
            video_encodings: sip_codecs.then(|| vec!["H.264".into()]),
            ..Default::default()
        };
        let got = validate_spec(&raw);
        if mask != 0 {
            prop_assert_eq!(got, Err(first_missing(mask)));
            return Ok(());
        }
        let spec = got.expect("complete description");
        if tech == Technology::Webrtc {
            let audio = if media.contains(&Media::Audio) { strings(&["G.711", "Opus"]) } else { BTreeSet::new() };
            let video = if media.contains(&Media::Video) { strings(&["H.264", "VP8"]) } else { BTreeSet::new() };
            prop_assert_eq!(&spec.audio_encodings, &audio);
            prop_assert_eq!(&spec.video_encodings, &video);
        }
        if tech == Technology::Sip {
            prop_assert_eq!(spec.signaling_protocol.as_deref(), Some("SIP"));
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    // each of the seven incomplete combinations, explicitly
    for mask in 1u8..8 {
        let raw = RawConferenceSpec {
            model: (mask & 1 == 0).then_some(ConferenceModel::AdHoc),
            media: (mask & 2 == 0).then(|| BTreeSet::from([Media::Audio])),
            technology: (mask & 4 == 0).then_some(Technology::Webrtc),
            signaling_protocol: Some("wss".into()),
            ..Default::default()
        };
        ensure!(validate_spec(&raw) == Err(first_missing(mask)), "mask {mask:03b} gave {:?}", validate_spec(&raw));
        rejected.insert(mask);
    }
    ensure!(rejected.len() == 7, "{} combinations checked", rejected.len());
    within(Duration::from_secs(1), start.elapsed())?;
    Ok(format!("7/7 incomplete combinations rejected, 1000 random descriptions, {} ms", start.elapsed().as_millis()))
}

// ---- 2: timed media over HTTP ----

const MIN: u64 = 60_000;

struct Stack {
    _iaas: Vec<Background>,
    _gateway: Background,
    client: Client,
}

/// Two IaaS servers and a gateway, all over loopback HTTP. Signaling and
/// instant messaging live on `iaas-a`, media mixing on `iaas-b`.
fn stack() -> Stack {
    let cfg = IaasConfig::new(PlacementMode::PerSubstrate);
    let mut seed = SeedFile::default();
    let mut iaas = Vec::new();
    for id in ["iaas-a", "iaas-b"] {
        let sim = Arc::new(Mutex::new(SimIaas::new(id.into(), cfg.clone())));
        let server = Background::start("127.0.0.1:0", iaas_server::router(sim)).expect("iaas server");
        seed.providers.push(ProviderEndpoint { id: id.into(), address: server.url() });
        let on_a = |t: SubstrateType| t.is_signaling() || t == SubstrateType::InstantMessaging;
        seed.offers.extend(catalogue(id, &cfg).into_iter().filter(|o| on_a(o.substrate_type) == (id == "iaas-a")));
        iaas.push(server);
    }
    let gw = GatewayConfig { registry: seed, ..Default::default() };
    let gateway = Background::start("127.0.0.1:0", rest::router(gw.build().expect("gateway"))).expect("gateway");
    let client = Client::new(gateway.url());
    Stack { _iaas: iaas, _gateway: gateway, client }
}

fn call(c: &Client, method: &str, path: &str, body: Value) -> Result<Value, String> {
    let r = c.send(method, path, &body).map_err(|e| format!("{method} {path}: {e}"))?;
    ensure!(r.status < 300, "{method} {path} -> {} {}", r.status, r.body);
    Ok(r.body)
}

fn get(c: &Client, path: &str) -> Result<Value, String> {
    let r = c.get(path).map_err(|e| format!("GET {path}: {e}"))?;
    ensure!(r.status == 200, "GET {path} -> {} {}", r.status, r.body);
    Ok(r.body)
}

fn clock_to(c: &Client, t: u64) -> Result<(), String> {
    call(c, "POST", "/v1/admin/clock", json!({ "to_ms": t })).map(|_| ())
}

/// Participants on the instant-messaging instance, `None` if none is active.
fn im_members(c: &Client) -> Result<Option<u64>, String> {
    let snaps = get(c, "/v1/admin/iaas")?;
    let found: Vec<u64> = snaps
        .as_array()
        .into_iter()
        .flatten()
        .flat_map(|s| s["instances"].as_array().cloned().unwrap_or_default())
        .filter(|i| i["substrate_type"] == "instant_messaging")
        .map(|i| i["participants"].as_u64().unwrap_or(0))
        .collect();
    ensure!(found.len() <= 1, "{} messaging instances", found.len());
    Ok(found.first().copied())
}

struct Trace {
    probes: Vec<(u64, Option<u64>)>,
    events: Value,
    final_iaas: Value,
}

fn timed_media_run() -> Result<Trace, String> {
    let s = stack();
    let c = &s.client;
    let conf = call(
        c,
        "POST",
        "/v1/conferences",
        json!({"model": "dial_in", "media": ["audio"], "technology": "sip", "audio_encodings": ["G.711"], "conference_size": 50}),
    )?;
    let uri = conf["uri"].as_str().ok_or("no uri")?.to_string();
    let bindings = get(c, &uri)?["bindings"].clone();
    ensure!(
        bindings["dial_in_signaling"]["provider_id"] == "iaas-a" && bindings["audio_mixer"]["provider_id"] == "iaas-b",
        "not composed across both providers: {bindings}"
    );
    let join = |name: String| call(c, "POST", &format!("{uri}/participants"), json!({"name": name, "uri": format!("sip:{name}@example.org")}));
    for i in 0..3 {
        join(format!("early{i}"))?;
    }
    clock_to(c, 10 * MIN)?;
    for i in 0..2 {
        join(format!("mid{i}"))?;
    }

    let mut probes = Vec::new();
    clock_to(c, 30 * MIN - 1)?;
    probes.push((30 * MIN - 1, im_members(c)?));
    clock_to(c, 30 * MIN)?;
    call(c, "PATCH", &uri, json!({"add_media": "text", "duration_s": 300}))?;
    probes.push((30 * MIN, im_members(c)?));
    let rec = get(c, &uri)?;
    let everyone_in = rec["participants"]
        .as_object()
        .map(|ps| ps.values().all(|p| p["memberships"].get("instant_messaging").is_some()))
        .unwrap_or(false);
    ensure!(everyone_in, "not every participant is on the messaging substrate");
    clock_to(c, 32 * MIN)?;
    join("late".into())?;
    probes.push((32 * MIN, im_members(c)?));
    clock_to(c, 35 * MIN - 1)?;
    probes.push((35 * MIN - 1, im_members(c)?));
    clock_to(c, 35 * MIN)?;
    probes.push((35 * MIN, im_members(c)?));
    let media = get(c, &uri)?["spec"]["media"].clone();
    ensure!(media == json!(["audio"]), "media after expiry: {media}");
    clock_to(c, 40 * MIN)?;
    Ok(Trace { probes, events: get(c, "/v1/admin/events")?, final_iaas: get(c, "/v1/admin/iaas")? })
}

fn timed_media() -> Outcome {
    let start = Instant::now();
    let a = timed_media_run()?;
    let want = vec![(30 * MIN - 1, None), (30 * MIN, Some(5)), (32 * MIN, Some(6)), (35 * MIN - 1, Some(6)), (35 * MIN, None)];
    ensure!(a.probes == want, "messaging probes {:?}, expected {:?}", a.probes, want);
    let im_events: Vec<(String, u64)> = a
        .events
        .as_array()
        .ok_or("events not a list")?
        .iter()
        .filter(|e| e["substrate_type"] == "instant_messaging")
        .map(|e| (e["kind"].as_str().unwrap_or("").to_string(), e["t_ms"].as_u64().unwrap_or(0)))
        .collect();
    let bound = im_events.iter().filter(|(k, _)| k == "substrate_bound").map(|e| e.1).collect::<Vec<_>>();
    let released = im_events.iter().filter(|(k, _)| k == "substrate_released").map(|e| e.1).collect::<Vec<_>>();
    ensure!(bound == [30 * MIN] && released == [35 * MIN], "messaging bound at {bound:?}, released at {released:?}");
    let b = timed_media_run()?;
    ensure!(a.events == b.events, "event logs differ between replays");
    ensure!(a.final_iaas == b.final_iaas && a.probes == b.probes, "provider state differs between replays");
    within(Duration::from_secs(5), start.elapsed())?;
    Ok(format!("text active on [30, 35) min, 5 then 6 members, 2 identical replays, {} ms", start.elapsed().as_millis()))
}

// ---- 3 and 4: latencies ----

fn latency_runs() -> Result<Vec<(Mode, f64, f64)>, String> {
    Mode::ALL
        .into_iter()
        .map(|m| {
            let cfg = ScenarioConfig { repetitions: 3, seed: 7, ..ScenarioConfig::new(m) };
            let r = run_scenario(&cfg).map_err(|e| e.to_string())?.report;
            Ok((m, r.conference_start_time_ms.mean, r.participant_join_time_ms.mean))
        })
        .collect()
}

fn start_ordering(runs: &[(Mode, f64, f64)]) -> Outcome {
    let (ncc, csip, cmip) = (runs[0].1, runs[1].1, runs[2].1);
    let lat = LatencyModel::default();
    let gap = (lat.inter_iaas_connect_ms - lat.intra_vm_connect_ms) as f64;
    ensure!(ncc < csip && csip < cmip, "start means ncc {ncc}, csip {csip}, cmip {cmip}");
    ensure!(cmip - csip >= gap, "cmip - csip = {} < {gap}", cmip - csip);
    Ok(format!("ncc {ncc:.0} < csip {csip:.0} < cmip {cmip:.0} ms, gap {:.0} >= {gap:.0}", cmip - csip))
}

fn join_times(runs: &[(Mode, f64, f64)]) -> Outcome {
    let (csip, cmip) = (runs[1].2, runs[2].2);
    let rel = (csip - cmip).abs() / csip.max(cmip);
    ensure!(rel < 0.10, "join means csip {csip}, cmip {cmip} differ by {:.1}%", rel * 100.0);
    ensure!(csip < 400.0 && cmip < 400.0, "join means csip {csip}, cmip {cmip}");
    Ok(format!("csip {csip:.1} ms, cmip {cmip:.1} ms, difference {:.1}%", rel * 100.0))
}

// ---- 5: allocation comparison ----

const CROSSOVER: u32 = 1051;

fn allocation_curves() -> Outcome {
    let start = Instant::now();
    let cfgs = default_comparison(0);
    let s = &cfgs[0].schedule;
    ensure!((s.grow_step, s.grow_interval_s, s.max_size) == (200, 600, 3000), "schedule {s:?}");
    let runs = compare_modes(&cfgs).map_err(|e| e.to_string())?;
    for r in &runs {
        let a = &r.report.allocation;
        ensure!(a.len() == 15, "{}: {} samples", r.report.mode, a.len());
        ensure!(a.windows(2).all(|w| w[0].n < w[1].n && w[0].ram_mb <= w[1].ram_mb), "{} not monotone", r.report.mode);
    }
    let (csip, cmip) = (&runs[1].report.allocation, &runs[2].report.allocation);
    for (c, m) in csip.iter().zip(cmip) {
        if c.n < CROSSOVER {
            ensure!(c.ram_mb <= m.ram_mb, "n={}: csip {} MB > cmip {} MB", c.n, c.ram_mb, m.ram_mb);
        } else {
            ensure!(m.ram_mb <= c.ram_mb, "n={}: cmip {} MB > csip {} MB", c.n, m.ram_mb, c.ram_mb);
        }
    }
    within(Duration::from_secs(10), start.elapsed())?;
    let peak = |a: &[confpaas_core::bench::AllocationSample]| a.last().map_or(0, |s| s.vms);
    Ok(format!("3 monotone curves, crossover at {CROSSOVER} holds, peak VMs csip {} cmip {}, {} ms", peak(csip), peak(cmip), start.elapsed().as_millis()))
}

// ---- 6: offer selection ----

fn brute_force(cands: &[SubstrateOffer], w: &SelectionWeights) -> SubstrateOffer {
    let price: Vec<f64> = cands.iter().map(|o| o.price_per_participant_hour).collect();
    let lat: Vec<f64> = cands.iter().map(|o| o.qos.get("activation_latency_ms").copied().unwrap_or(0.0)).collect();
    let span = |v: &[f64]| (v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let ((plo, phi), (llo, lhi)) = (span(&price), span(&lat));
    let norm = |x: f64, lo: f64, hi: f64| if hi == lo { 0.0 } else { (x - lo) / (hi - lo) };
    let score = |i: usize| w.w_price * (1.0 - norm(price[i], plo, phi)) + w.w_qos * (1.0 - norm(lat[i], llo, lhi));
    let key = |i: usize| (cands[i].provider_id.clone(), cands[i].offer_id);
    let best = (0..cands.len())
        .reduce(|b, i| {
            let (si, sb) = (score(i), score(b));
            if si > sb + 1e-9 || ((si - sb).abs() <= 1e-9 && key(i) < key(b)) { i } else { b }
        })
        .expect("non-empty");
    cands[best].clone()
}

fn selection() -> Outcome {
    let spec = validate_spec(&confpaas_core::bench::scenario::default_conference()).map_err(|e| e.to_string())?;
    let base = determine_substrates(&spec)[0].clone();
    let sets = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..sets {
        let t = testkit::substrate_type(&mut rng);
        let req = SubstrateRequirement { substrate_type: t, ..base.clone() };
        let cands = testkit::offers(&mut rng, t, 12);
        let w = SelectionWeights { w_price: rng.random_range(0..=4) as f64 * 0.25, w_qos: rng.random_range(1..=4) as f64 * 0.25 };
        let got = select_offer(&req, &cands, &w).map_err(|t| format!("case {case}: nothing selected for {t}"))?;
        let want = brute_force(&cands, &w);
        ensure!(got == want, "case {case}: selected offer {} instead of {}", got.offer_id, want.offer_id);
        let k = rng.random_range(0.01..100.0);
        let scaled: Vec<SubstrateOffer> = cands
            .iter()
            .map(|o| SubstrateOffer { price_per_participant_hour: o.price_per_participant_hour * k, ..o.clone() })
            .collect();
        let again = select_offer(&req, &scaled, &w).map_err(|t| format!("case {case}: nothing selected for {t}"))?;
        ensure!(again.offer_id == got.offer_id, "case {case}: scaling prices by {k} changed the winner");
    }
    Ok(format!("{sets} random offer sets match the argmax oracle and survive price scaling"))
}

// ---- 7: scaling fuzz ----

fn scaling() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    for mode in [Mode::Csip, Mode::Cmip] {
        let out = scaling_fuzz(mode, 2024, 10_000, 20).map_err(|e| e.to_string())?;
        ensure!(out.steps == 10_000, "{mode}: {} steps", out.steps);
        ensure!(out.under_capacity.is_empty(), "{mode}: capacity < participants at {:?}", &out.under_capacity[..out.under_capacity.len().min(3)]);
        ensure!(out.audit.is_ok(), "{mode}: audit {:?}", &out.audit.violations[..out.audit.violations.len().min(3)]);
        ensure!(out.leftover_instances == 0, "{mode}: {} orphaned instances", out.leftover_instances);
        notes.push(format!("{mode} peak {} / {} scale events", out.peak_participants, out.scale_events));
    }
    within(Duration::from_secs(30), start.elapsed())?;
    Ok(format!("2 x 10000 steps, {}, {} ms", notes.join(", "), start.elapsed().as_millis()))
}

// ---- 8: closed form and wire identity ----

fn tenths(t: SubstrateType) -> u64 {
    match t {
        SubstrateType::DialInSignaling | SubstrateType::DialOutSignaling => 10,
        SubstrateType::AudioMixer => 50,
        SubstrateType::VideoMixer => 200,
        SubstrateType::InstantMessaging => 5,
        SubstrateType::FloorControl => 2,
    }
}

fn closed_form(mode: PlacementMode, n: u64, types: &BTreeSet<SubstrateType>) -> u64 {
    let usable = (4096 - 512) * 10;
    match mode {
        PlacementMode::PerSubstrate => types.iter().map(|&t| (n * tenths(t)).div_ceil(usable)).sum(),
        _ => n.div_ceil(types.iter().map(|&t| usable / (types.len() as u64 * tenths(t))).min().expect("types")),
    }
}

fn closed_form_and_wire() -> Outcome {
    let model = ResourceModel::default();
    let types = BTreeSet::from([SubstrateType::DialInSignaling, SubstrateType::AudioMixer]);
    for mode in [PlacementMode::Bundle, PlacementMode::PerSubstrate] {
        for n in 1..5000u32 {
            let got = alloc(&model, mode, n, &types).ok_or(format!("{mode:?} n={n}: no allocation"))?;
            let want = closed_form(mode, n as u64, &types);
            ensure!(got.vms as u64 == want && got.ram_mb == want as f64 * 4096.0, "{mode:?} n={n}: {} VMs, closed form {want}", got.vms);
        }
    }
    let cases = 5000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..cases {
        let req = testkit::request(&mut rng);
        ensure!(decode_request(&encode_request(&req)).as_ref() == Ok(&req), "request {i} changed in transit: {req:?}");
        let resp = testkit::response(&mut rng);
        ensure!(decode_response(&encode_response(&resp)).as_ref() == Ok(&resp), "response {i} changed in transit: {resp:?}");
    }
    Ok(format!("alloc = closed form for N in 1..5000 in both modes, {cases} requests and responses round-trip"))
}

fn main() {
    let mut out = std::io::stdout().lock();
    let lat = latency_runs();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 description validation", Box::new(validation)),
        ("2 timed media over two providers", Box::new(timed_media)),
        ("3 start-time ordering", Box::new(|| start_ordering(lat.as_ref().map_err(Clone::clone)?))),
        ("4 join times", Box::new(|| join_times(lat.as_ref().map_err(Clone::clone)?))),
        ("5 allocation curves", Box::new(allocation_curves)),
        ("6 offer selection", Box::new(selection)),
        ("7 scaling fuzz", Box::new(scaling)),
        ("8 closed form and wire", Box::new(closed_form_and_wire)),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let result = check();
        let ms = started.elapsed().as_millis();
        match result {
            Ok(detail) => writeln!(out, "PASS  {name:<34} {detail} [{ms} ms]"),
            Err(why) => {
                failed += 1;
                writeln!(out, "FAIL  {name:<34} {why} [{ms} ms]")
            }
        }
        .expect("stdout");
    }
    writeln!(out, "acceptance: {} of 8 criteria passed", 8 - failed).expect("stdout");
    if failed > 0 {
        std::process::exit(1);
    }
}
