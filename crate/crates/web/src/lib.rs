//! Three operations for the browser demo. Each has a plain Rust form used
//! by the tests and a `wasm_bindgen` wrapper returning JSON.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use confpaas_core::bench::{compare_modes, default_comparison, deploy, Mode, ScenarioConfig};
use confpaas_core::model::{Media, ParticipantDescriptor, ParticipantId, SubstrateType};
use confpaas_core::orchestrator::ScalingPolicy;
use confpaas_core::sim::{alloc, PlacementMode, ResourceModel};
use confpaas_core::OrchestratorConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: u32,
    pub ncc_vms: u32,
    pub csip_vms: u32,
    pub cmip_vms: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curves {
    pub types: Vec<SubstrateType>,
    pub points: Vec<CurvePoint>,
    /// Range of N* for which CSIP needs no more VMs below N* and CMIP needs
    /// no more from N* on. `None` when no such point exists up to `max_size`.
    pub crossover: Option<(u32, u32)>,
}

fn parse_media(list: &str) -> Result<BTreeSet<Media>, String> {
    let media: BTreeSet<Media> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown medium `{s}`")))
        .collect::<Result<_, _>>()?;
    if media.is_empty() {
        return Err("pick at least one medium".into());
    }
    Ok(media)
}

/// VM counts of a dial-in conference with `media`, sampled every `step`
/// participants up to `max_size`.
pub fn allocation_curves(max_size: u32, step: u32, media: &str) -> Result<Curves, String> {
    if step == 0 || max_size == 0 || max_size > 100_000 {
        return Err("need step > 0 and 0 < max_size <= 100000".into());
    }
    let model = ResourceModel::default();
    let mut types: BTreeSet<SubstrateType> = parse_media(media)?.into_iter().map(SubstrateType::for_media).collect();
    types.insert(SubstrateType::DialInSignaling);
    let vms = |mode, n| alloc(&model, mode, n, &types).map(|a| a.vms).ok_or_else(|| "one participant does not fit a VM".to_string());
    let pool = vms(PlacementMode::Prealloc, max_size)?;
    let mut csip = vec![0];
    let mut cmip = vec![0];
    for n in 1..=max_size {
        csip.push(vms(PlacementMode::Bundle, n)?);
        cmip.push(vms(PlacementMode::PerSubstrate, n)?);
    }
    let holds = |star: u32| (1..=max_size).all(|n| if n < star { csip[n as usize] <= cmip[n as usize] } else { cmip[n as usize] <= csip[n as usize] });
    let valid: Vec<u32> = (1..=max_size).filter(|&s| holds(s)).collect();
    let points = (1..=max_size / step)
        .map(|k| {
            let n = k * step;
            CurvePoint { n, ncc_vms: pool, csip_vms: csip[n as usize], cmip_vms: cmip[n as usize] }
        })
        .collect();
    Ok(Curves { types: types.into_iter().collect(), points, crossover: valid.first().zip(valid.last()).map(|(a, b)| (*a, *b)) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyBar {
    pub mode: Mode,
    pub start_mean_ms: f64,
    pub start_p95_ms: f64,
    pub join_mean_ms: f64,
    pub join_p95_ms: f64,
}

/// Start and join latencies of the growth scenario in every mode.
pub fn latency_bars(seed: u64, repetitions: u32, jitter_ms: u64, max_size: u32) -> Result<Vec<LatencyBar>, String> {
    let configs: Vec<ScenarioConfig> = default_comparison(seed)
        .into_iter()
        .map(|mut c| {
            c.repetitions = repetitions;
            c.iaas.latency.jitter_ms = jitter_ms;
            c.schedule.max_size = max_size;
            c
        })
        .collect();
    let runs = compare_modes(&configs).map_err(|e| e.to_string())?;
    Ok(runs
        .into_iter()
        .map(|r| LatencyBar {
            mode: r.report.mode,
            start_mean_ms: r.report.conference_start_time_ms.mean,
            start_p95_ms: r.report.conference_start_time_ms.p95,
            join_mean_ms: r.report.participant_join_time_ms.mean,
            join_p95_ms: r.report.participant_join_time_ms.p95,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub t_s: u64,
    pub participants: u32,
    pub capacity: u32,
}

/// Random joins and leaves against a CSIP conference with periodic scaling.
/// Arrivals outpace departures for the first half, then the reverse.
pub fn scaling_trace(seed: u64, steps: u32, high_watermark: f64, low_watermark: f64, step: u32) -> Result<Vec<TracePoint>, String> {
    let policy = ScalingPolicy { high_watermark, low_watermark, step, ..ScalingPolicy::default() };
    policy.validate()?;
    let cfg = ScenarioConfig {
        orchestrator: OrchestratorConfig { policy, autoscale: true, ..Default::default() },
        ..ScenarioConfig::new(Mode::Csip)
    };
    let d = deploy(&cfg, seed).map_err(|e| e.to_string())?;
    let o = d.orchestrator();
    let spec = cfg.spec().map_err(|e| e.to_string())?;
    let id = o.create_conference_spec(spec).map_err(|e| e.to_string())?.id;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut present: Vec<ParticipantId> = Vec::new();
    let mut trace = Vec::with_capacity(steps as usize);
    for i in 0..steps {
        o.advance_by(rng.random_range(0..20_000));
        let p_join = if i < steps / 2 { 0.7 } else { 0.3 };
        if present.is_empty() || rng.random_bool(p_join) {
            let desc = ParticipantDescriptor::new(format!("u{i}"), format!("sip:u{i}@demo.example"));
            present.push(o.add_participant(&id, desc).map_err(|e| e.to_string())?.participant.id);
        } else {
            let p = present.swap_remove(rng.random_range(0..present.len()));
            o.remove_participant(&id, &p).map_err(|e| e.to_string())?;
        }
        let rec = o.conference(&id).ok_or("conference vanished")?;
        trace.push(TracePoint { t_s: o.now_ms() / 1000, participants: rec.participant_count(), capacity: rec.capacity() });
    }
    Ok(trace)
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = allocationCurves)]
pub fn allocation_curves_js(max_size: u32, step: u32, media: &str) -> Result<String, JsError> {
    to_js(allocation_curves(max_size, step, media))
}

#[wasm_bindgen(js_name = latencyBars)]
pub fn latency_bars_js(seed: u32, repetitions: u32, jitter_ms: u32, max_size: u32) -> Result<String, JsError> {
    to_js(latency_bars(seed as u64, repetitions, jitter_ms as u64, max_size))
}

#[wasm_bindgen(js_name = scalingTrace)]
pub fn scaling_trace_js(seed: u32, steps: u32, high_watermark: f64, low_watermark: f64, step: u32) -> Result<String, JsError> {
    to_js(scaling_trace(seed as u64, steps, high_watermark, low_watermark, step))
}
